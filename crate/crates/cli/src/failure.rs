use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_CHECK: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    /// A verification command ran to completion and found a violation.
    Check(String),
    Lib(lipforensics::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        use lipforensics::Error as E;
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Data(_) => EXIT_DATA,
            Failure::Check(_) => EXIT_CHECK,
            Failure::Lib(E::Config(_) | E::InvalidArgument(_)) => EXIT_CONFIG,
            Failure::Lib(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<lipforensics::Error> for Failure {
    fn from(e: lipforensics::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let cfg: Failure = lipforensics::Error::Config("x".into()).into();
        assert_eq!(cfg.exit_code(), EXIT_CONFIG);
        let data: Failure = lipforensics::Error::Data("x".into()).into();
        assert_eq!(data.exit_code(), EXIT_DATA);
        assert_eq!(Failure::Check("x".into()).exit_code(), EXIT_CHECK);
    }
}
