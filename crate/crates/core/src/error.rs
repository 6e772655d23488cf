use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid language code {0:?}: codes must be non-empty lowercase ASCII")]
    InvalidLanguageCode(String),

    #[error("language pair {0:?} has identical source and target")]
    IdenticalLanguages(String),

    #[error("score {field} = {value} is outside {range}")]
    ScoreOutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("record {0:?} has an empty source_text")]
    EmptySource(String),

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("token sequences may not contain empty tokens")]
    EmptyToken,

    #[error("unmapped language {0:?}")]
    UnmappedLanguage(String),

    #[error("unknown resource level {0:?}")]
    UnknownLevel(String),

    #[error("no threshold profile for model {0:?}")]
    MissingProfile(String),

    #[error("profile for model {profile:?} applied to a record of model {record:?}")]
    ProfileMismatch { profile: String, record: String },

    #[error("no validation records for model {0:?}")]
    NoValidationRecords(String),

    #[error("validation record {0:?} has no alti_src_contrib score")]
    MissingAlti(String),

    #[error("record {0:?} has neither an spbleu score nor a reference")]
    MissingQuality(String),

    #[error("model {model:?} does not cover sources {missing:?}")]
    CoverageMismatch { model: String, missing: Vec<String> },

    #[error("source {0:?} is not in the candidate set")]
    NotCandidate(String),

    #[error("model {model:?} is not aligned with the primary corpus; missing {missing:?}")]
    Alignment { model: String, missing: Vec<String> },

    #[error("verdict for {verdict:?} does not match record {record:?}")]
    VerdictMismatch { verdict: String, record: String },

    #[error("perturbed record {id:?} refers to unknown parent {parent:?}")]
    UnknownParent { id: String, parent: String },

    #[error("record {0:?} is already perturbed")]
    AlreadyPerturbed(String),

    #[error("language pair {0} is not English-centric")]
    NotEnglishCentric(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("frequency pool is empty")]
    EmptyPool,
}
