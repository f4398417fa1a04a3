//! Verification metrics: TAR@FAR operating points, error-vs-reject curves
//! and confidence/similarity bins.

mod bins;
mod io;
mod protocol;
mod reject;
mod roc;

pub use bins::{correlation_bins, Bin, BinRange, CorrelationBins, DEFAULT_BINS};
pub use io::{read_curve_csv, write_curve_csv, CurveCsvRow};
pub(crate) use io::float_repr;
pub use protocol::{build_covariate_protocol, model_confidences, sample_labelled_pairs, sample_protocol_pairs, score_protocol, ProtocolConfig, ProtocolPair};
pub use reject::{default_r_grid, error_vs_reject, retained_count, ErrorRejectCurve, ErrorRejectRow, ScoredPair};
pub use roc::{roc_summary, tar_at_far, OperatingPoint, RocSummary, DEFAULT_FAR_TARGETS};
