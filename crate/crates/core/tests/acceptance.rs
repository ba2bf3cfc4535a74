//! One line per acceptance criterion; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use wits::cascade::{cascade_classify, ActionFlags, EngagementLabel, HeadPose, Posture};
use wits::cli::{hash_tree, MANIFEST_FILE};
use wits::dataset::{generate_synthetic, BBox, SyntheticConfig};
use wits::eval::*;
use wits::interest_map::{encode_png, render_overlay, MapSettings, StudentScore};
use wits::nn::gradcheck::gradient_check;
use wits::nn::layers::conv::conv2d;
use wits::nn::{Init, NetworkSpec, ParamStore, Tensor};
use wits::rng::SeedStream;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn cascade_oracle() -> Outcome {
    let start = Instant::now();
    let mut agree = 0;
    let mut total = 0;
    for bits in 0u8..128 {
        let a = ActionFlags::from_bits(bits);
        for &p in Posture::ALL {
            for &h in HeadPose::ALL {
                let accept = bits & 0b1_0001 != 0;
                let reject = bits & 0b110_1010 != 0
                    || matches!(p, Posture::LeaningLeft | Posture::LeaningRight)
                    || matches!(h, HeadPose::FarLeft | HeadPose::FarRight | HeadPose::Up | HeadPose::BelowDesk);
                let expected = if accept || !reject { EngagementLabel::Interested } else { EngagementLabel::NotInterested };
                agree += (cascade_classify(&a, p, h) == expected) as usize;
                total += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(total == 5120 && agree == total && t < Duration::from_secs(1), format!("{agree}/{total} triples agree in {}", secs(t)))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let spec = NetworkSpec::tiny(32, 32, 1);
    let params: ParamStore<f64> = ParamStore::init(&spec, Init::He, 11).unwrap();
    let mut rng = SeedStream::new(12).rng();
    let input: Vec<f64> = (0..2 * 3 * 32 * 32).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let report = gradient_check(&spec, &params, &input, &[0, 1], SeedStream::new(13), 1e-4).unwrap();
    let t = start.elapsed();
    outcome(
        report.passed() && t < Duration::from_secs(120),
        format!(
            "{} parameters, max relative error {:.2e}, {} kink crossings re-differenced, {} failures, {}",
            report.checked,
            report.max_relative_error,
            report.kink_crossings,
            report.failures.len(),
            secs(t)
        ),
    )
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let [n, c, h, wd] = x.shape().try_into().unwrap();
    let [oc, _, k, _] = w.shape().try_into().unwrap();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * oc * oh * ow];
    for i in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = b[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xo * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += x.data()[((i * c + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((o * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[((i * oc + o) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    out
}

fn conv_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStream::new(21).rng();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for stride in [1, 2, 4] {
        for pad in [0, 1, 2] {
            for _ in 0..6 {
                let n = rng.random_range(1..=3);
                let c = rng.random_range(1..=4);
                let oc = rng.random_range(1..=5);
                let k = rng.random_range(1..=5);
                let h = rng.random_range(k.max(5)..=20);
                let w = rng.random_range(k.max(5)..=20);
                let x = Tensor::from_fn(vec![n, c, h, w], |_| rng.random::<f64>() * 2.0 - 1.0);
                let wt = Tensor::from_fn(vec![oc, c, k, k], |_| rng.random::<f64>() * 2.0 - 1.0);
                let b: Vec<f64> = (0..oc).map(|_| rng.random::<f64>()).collect();
                let fast = conv2d(&x, &wt, &b, stride, pad).unwrap();
                let slow = naive_conv(&x, &wt, &b, stride, pad);
                assert_eq!(fast.data().len(), slow.len());
                worst = fast.data().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
                cases += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(worst <= 1e-6 && t < Duration::from_secs(60), format!("{cases} random cases, max abs difference {worst:.2e}, {}", secs(t)))
}

fn published_constants() -> Outcome {
    let a = ConfusionMatrix::new(82171, 13149, 7594, 97086).accuracy().unwrap();
    let b = ConfusionMatrix::new(100535, 83135, 88095, 141141).accuracy().unwrap();
    outcome((a - 0.8963).abs() <= 0.0005 && (b - 0.585).abs() <= 0.005, format!("validation matrix {a:.4}, hold-out matrix {b:.4}"))
}

fn synthetic(overlap: f64, frames: usize, persistence: f64, seed: u64) -> Dataset {
    let cfg = SyntheticConfig { subjects: 10, frames_per_subject: frames, overlap, persistence, seed, ..SyntheticConfig::default() };
    let (records, crops) = generate_synthetic(&cfg).unwrap();
    Dataset { records, crops }
}

fn tiny_config(seed: u64, split: SplitSizes) -> ProtocolConfig {
    ProtocolConfig { seed, classifier: ClassifierConfig::preset("tiny").unwrap(), split, cross_validation_folds: 0, ..ProtocolConfig::default() }
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let data = synthetic(0.1, 200, 0.8, 31);
    let split = SplitSizes { train_per_class: 600, test_per_class: 150, validation_total: 300 };
    let config = tiny_config(31, split);
    let (model, run) = train_and_evaluate(ClassifierKind::Cnn, &data, 1, &config).unwrap();
    let t = start.elapsed();
    let iterations = match &model {
        Trained::Cnn(c) => c.iteration,
        Trained::Svm(_) => 0,
    };
    outcome(
        run.test_accuracy >= 0.95 && iterations <= 500 && t < Duration::from_secs(300),
        format!(
            "{} crops 64x64, {} iterations, held-out {:.2}% (validation {:.2}%), {}",
            data.records.len(),
            iterations,
            100.0 * run.test_accuracy,
            100.0 * run.validation_accuracy,
            secs(t)
        ),
    )
}

fn cnn_beats_svm() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in [1, 2] {
        let data = synthetic(0.5, 200, 0.8, seed);
        let split = SplitSizes { train_per_class: 600, test_per_class: 150, validation_total: 300 };
        let config = tiny_config(seed, split);
        let cnn = train_and_evaluate(ClassifierKind::Cnn, &data, 1, &config).unwrap().1.test_accuracy;
        let svm = train_and_evaluate(ClassifierKind::Svm, &data, 1, &config).unwrap().1.test_accuracy;
        pass &= cnn - svm >= 0.05;
        parts.push(format!("seed {seed}: CNN {:.2}% vs SVM {:.2}%", 100.0 * cnn, 100.0 * svm));
    }
    outcome(pass, format!("{}, {}", parts.join("; "), secs(start.elapsed())))
}

fn cross_subject_integrity() -> Outcome {
    let start = Instant::now();
    let data = synthetic(0.1, 200, 0.8, 41);
    let mut config = tiny_config(41, SplitSizes::default());
    config.classifier.train.iterations = 60;
    config.holdout_train_per_class = 400;
    let report = run_protocol(Protocol::CrossSubject, ClassifierKind::Cnn, &data, &config).unwrap();
    let disjoint = report.subjects.iter().all(|s| s.disjoint);
    let values: Vec<f64> = report.subjects.iter().filter_map(|s| s.test_accuracy).collect();
    let recomputed = summarize(&values).ok() == report.test_summary;
    let verified = report.verify().is_ok();
    let s = report.test_summary.unwrap();
    outcome(
        report.subjects.len() == 10 && disjoint && recomputed && verified,
        format!(
            "{} subject reports, disjoint {disjoint}, summary recomputes {recomputed} (mean {:.2}%, median {:.2}%), {}",
            report.subjects.len(),
            100.0 * s.mean,
            100.0 * s.median,
            secs(start.elapsed())
        ),
    )
}

fn channel_concatenation() -> Outcome {
    let start = Instant::now();
    let data = synthetic(0.1, 400, 0.97, 51);
    let split = SplitSizes { train_per_class: 300, test_per_class: 100, validation_total: 200 };
    let config = ProtocolConfig { frames: vec![1, 2, 4], ..tiny_config(51, split) };
    let report = run_protocol(Protocol::SequenceLength, ClassifierKind::Cnn, &data, &config).unwrap();
    let channels: Vec<usize> = report.runs.iter().map(|r| r.channels).collect();
    let acc: Vec<f64> = report.runs.iter().map(|r| r.test_accuracy).collect();
    let within = acc.len() == 3 && acc[1..].iter().all(|a| (a - acc[0]).abs() <= 0.03);
    outcome(
        channels == [3, 6, 12] && within,
        format!(
            "channels {channels:?}, accuracy k=1/2/4 {:.2}% / {:.2}% / {:.2}%, {}",
            100.0 * acc[0],
            100.0 * acc[1],
            100.0 * acc[2],
            secs(start.elapsed())
        ),
    )
}

fn artifacts(dir: &Path) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    hash_tree(dir, dir, &mut h).unwrap();
    h.remove(MANIFEST_FILE);
    h
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("quick.json"),
        r#"{"protocol": {"classifier": {"network": "tiny", "train": {"iterations": 40, "batch_size": 32, "init": {"kind": "he"}}},
            "split": {"train_per_class": 100, "test_per_class": 30, "validation_total": 60}}}"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_wits")).current_dir(d).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let mut same = true;
    let mut files = 0;
    for workers in ["1", "4"] {
        let out = |name: &str| format!("w{workers}/{name}");
        run(&["--seed", "9", "--workers", workers, "--out", &out("data"), "synth", "--subjects", "4", "--frames", "60", "--crop-size", "32"]);
        run(&["--seed", "9", "--workers", workers, "--config", "quick.json", "--out", &out("cnn"), "train", "cnn", "--data", &out("data")]);
        run(&["--seed", "9", "--workers", workers, "--config", "quick.json", "--out", &out("svm"), "train", "svm", "--data", &out("data")]);
        run(&["--workers", workers, "--out", &out("render"), "render", "--model", &out("cnn/model.wnet"), "--data", &out("data"), "--limit", "5"]);
    }
    for stage in ["data", "cnn", "svm", "render"] {
        let a = artifacts(&d.join("w1").join(stage));
        let b = artifacts(&d.join("w4").join(stage));
        files += a.len();
        same &= a == b && !a.is_empty();
    }
    outcome(same, format!("synth, train cnn, train svm, render: {files} artifacts identical across --workers 1 and 4, {}", secs(start.elapsed())))
}

fn renderer() -> Outcome {
    let settings = MapSettings { blur_radius: 3.0, ..MapSettings::default() };
    let empty = render_overlay(96, 64, &[], &settings).unwrap();
    let transparent = empty.pixels().all(|p| p.0 == [0; 4]);
    let scores = vec![
        StudentScore { subject_id: "a".into(), bbox: BBox::new(10, 10, 40, 30), disengagement: 0.3 },
        StudentScore { subject_id: "b".into(), bbox: BBox::new(30, 20, 40, 30), disengagement: 0.9 },
    ];
    let img = render_overlay(96, 64, &scores, &settings).unwrap();
    let [r, g, b] = settings.colour(0.9);
    let expected = [r, g, b, (255.0 * settings.max_alpha * 0.9).round() as u8];
    let probe = img.get_pixel(40, 32).0 == expected;
    let bytes = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| encode_png(&render_overlay(96, 64, &scores, &settings).unwrap()).unwrap())
    };
    let identical = bytes(1) == bytes(1) && bytes(1) == bytes(3);
    outcome(
        transparent && probe && identical,
        format!("empty frame transparent {transparent}, overlap pixel at 0.9 colour {probe}, PNG bytes identical {identical}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("cascade oracle equivalence", cascade_oracle),
        ("gradient fidelity (tiny net, 32x32, f64)", gradient_fidelity),
        ("convolution oracle", conv_oracle),
        ("published confusion matrices", published_constants),
        ("end-to-end tiny CNN", end_to_end),
        ("CNN beats HOG-SVM by 5 points", cnn_beats_svm),
        ("cross-subject protocol integrity", cross_subject_integrity),
        ("channel concatenation", channel_concatenation),
        ("CLI determinism across workers", determinism),
        ("interest-map renderer", renderer),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
