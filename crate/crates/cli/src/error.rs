use stripe_core::detect::DetectError;
use stripe_core::evolve::EvolveError;
use stripe_core::geometry::LossError;
use stripe_core::image::ShapeMismatch;
use stripe_core::io::FormatError;
use stripe_core::metrics::MetricsError;
use stripe_core::synth::SynthError;

/// Failure of one CLI run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or an invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),
    /// The computation itself failed: divergence, stall, external tool.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Toml(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ShapeMismatch> for CliError {
    fn from(e: ShapeMismatch) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Config(_) => CliError::Usage(e.to_string()),
            LossError::Shape(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) | SynthError::InvalidStripe(_) => CliError::Usage(e.to_string()),
            SynthError::Io(_) | SynthError::Format(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Config(_)
            | DetectError::Untrained
            | DetectError::NotTrainable(_)
            | DetectError::KernelTooLarge { .. } => CliError::Usage(e.to_string()),
            DetectError::Shape(_)
            | DetectError::PromptOutside { .. }
            | DetectError::UnknownSample(_)
            | DetectError::EmptyDataset
            | DetectError::Format(_) => CliError::Data(e.to_string()),
            DetectError::Loss(l) => l.into(),
            DetectError::Diverged { .. } | DetectError::External(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Config(_) => CliError::Usage(e.to_string()),
            EvolveError::EmptyPool | EvolveError::BadSample { .. } => CliError::Data(e.to_string()),
            EvolveError::EmptyInit { .. } => CliError::Runtime(e.to_string()),
            EvolveError::Detect(d) => d.into(),
            EvolveError::Format(f) => f.into(),
            EvolveError::Metrics(m) => m.into(),
        }
    }
}
