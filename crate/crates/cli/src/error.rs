use std::fmt;
use std::io;
use std::path::Path;

use qgan_core::autonet::NetError;
use qgan_core::dataset::DatasetError;
use qgan_core::gan::GanError;
use qgan_core::metrics::MetricError;
use qgan_core::qsim::QsimError;
use qgan_core::viz::VizError;

/// Exit-code class of a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Numeric,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 1,
            Category::Data => 2,
            Category::Numeric => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Data => "data",
            Category::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Category::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Category::Data, message)
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self::new(Category::Numeric, message)
    }

    fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }

    /// `error[<category>]: <message>` on a single line.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        format!("error[{}]: {}", self.category.tag(), flat.join(" "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

impl From<QsimError> for CliError {
    fn from(e: QsimError) -> Self {
        match e {
            QsimError::NegativeProbability { .. } | QsimError::NotNormalizable | QsimError::DistributionSum(_) => {
                Self::numeric(e.to_string())
            }
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::BatchTooLarge { .. } | DatasetError::ZeroBatch => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFiniteGradient(_) => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::BadEmbedding(_) | MetricError::BadComponentCount { .. } => Self::usage(e.to_string()),
            MetricError::TooFewSamples { .. } => Self::data(e.to_string()),
            _ => Self::numeric(e.to_string()),
        }
    }
}

impl From<VizError> for CliError {
    fn from(e: VizError) -> Self {
        match e {
            VizError::Invalid { .. } => Self::numeric(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::NonFiniteLoss { .. } => Self::numeric(e.to_string()),
            GanError::Config(m) => Self::usage(m),
            GanError::Net(e) => e.into(),
            GanError::Data(e) => e.into(),
            GanError::Quantum(e) => e.into(),
            GanError::Sink(m) => Self::data(m),
            GanError::Io(e) => Self::data(e.to_string()),
            GanError::Csv(e) => Self::data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_single_and_prefixed() {
        let e = CliError::data("a\nb   c");
        assert_eq!(e.line(), "error[data]: a b c");
        assert_eq!(e.exit_code(), 2);
        assert_eq!(CliError::from(QsimError::Capacity(11)).exit_code(), 1);
        let nf = GanError::NonFiniteLoss {
            which: "generator",
            step: 3,
            value: f64::NAN,
        };
        assert_eq!(CliError::from(nf).exit_code(), 3);
    }
}
