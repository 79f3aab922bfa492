use std::fmt;
use std::process::ExitCode;

/// Why a command stopped, which decides the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numerical,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure {
            kind: Kind::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure {
            kind: Kind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn numerical(msg: impl fmt::Display) -> Self {
        Failure {
            kind: Kind::Numerical,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.exit_code())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Library errors raised while estimating are numerical failures, except
/// for malformed inputs.
impl From<torhsmm::Error> for Failure {
    fn from(e: torhsmm::Error) -> Self {
        let kind = match e {
            torhsmm::Error::InvalidInput(_) => Kind::Data,
            _ => Kind::Numerical,
        };
        Failure {
            kind,
            error: e.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            kind: Kind::Data,
            error: e.into(),
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Attaches context to any error, classifying it as `kind`.
pub trait Classify<T> {
    fn or_fail(self, kind: Kind, context: impl fmt::Display) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn or_fail(self, kind: Kind, context: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure {
            kind,
            error: e.into().context(context.to_string()),
        })
    }
}
