use std::fmt;

/// Exit code 2 for usage errors, 1 for everything the modules report.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Domain(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<omnisr::Error> for CliError {
    fn from(e: omnisr::Error) -> Self {
        match e {
            omnisr::Error::Usage(m) => Self::Usage(m),
            e => Self::Domain(e.to_string()),
        }
    }
}

impl From<omnisr_model::Error> for CliError {
    fn from(e: omnisr_model::Error) -> Self {
        match e {
            omnisr_model::Error::Core(e) => e.into(),
            e => Self::Domain(e.to_string()),
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Domain(e.to_string())
            }
        }
    )*};
}

domain_from!(std::io::Error, serde_json::Error, csv::Error, image::ImageError);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::from(omnisr::Error::Usage("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(omnisr_model::Error::Core(omnisr::Error::Usage("x".into()))).exit_code(), 2);
        assert_eq!(CliError::from(omnisr::Error::Validation("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(std::io::Error::other("x")).exit_code(), 1);
    }
}
