//! Metrics, classifier dispatch and the evaluation protocols.

pub mod classifier;
pub mod metrics;
pub mod protocol;
pub mod report;

pub use classifier::{fit, ClassifierConfig, ClassifierKind, Trained};
pub use metrics::{kfold, summarize, ConfusionMatrix, Fold, Summary};
pub use protocol::{run_protocol, train_and_evaluate, Dataset, Protocol, ProtocolConfig, ProtocolReport, RunReport, SplitSizes, SubjectReport};
pub use report::render_text;
