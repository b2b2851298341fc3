//! Experiment harness around [`chaotic_a2i`].
//!
//! The binary (`ca2i`) reproduces the converter studies end to end: it
//! draws sparse signal corpora, pushes them through the forced Lorenz
//! converter, tabulates the identifiability statistic over parameter
//! grids, recovers coefficients by multi-start shooting, and estimates
//! the chaotic response bandwidth. Every run is a pure function of the
//! resolved configuration — rerunning a command with the same config and
//! seed rewrites byte-identical artifacts.
//!
//! * [`config`] — the experiment grid, JSON config files, seed streams.
//! * [`artifacts`] — JSON/CSV writers with stable bytes.
//! * [`runs`] — the single-shot commands (generate, measure, reconstruct,
//!   identify, bandwidth, pipeline).
//! * [`sweeps`] — μ̄ and reconstruction-error tables over (T_cs, W, λ).

pub mod artifacts;
pub mod config;
pub mod runs;
pub mod sweeps;

/// Process-level failure classes; the binary maps them to exit codes
/// (usage errors exit 1, numerical breakdowns exit 2).
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation, unreadable or inconsistent inputs.
    Usage(anyhow::Error),
    /// The numerics gave out: divergence, singular systems, no usable runs.
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Numerical(e) => e,
        }
    }

    /// Tag the error with the pipeline stage it came from.
    pub fn stage(self, name: &'static str) -> Failure {
        match self {
            Failure::Usage(e) => Failure::Usage(e.context(format!("stage {name}"))),
            Failure::Numerical(e) => Failure::Numerical(e.context(format!("stage {name}"))),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.inner())
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

pub fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

/// Sort library errors into the two exit classes: anything the caller
/// could have prevented by fixing arguments or inputs is usage; anything
/// that happened inside a well-posed computation is numerical.
pub fn classify(e: chaotic_a2i::Error) -> Failure {
    use chaotic_a2i::Error::*;
    match e {
        Diverged { .. }
        | SingularSystem
        | NotPositiveDefinite { .. }
        | AllRealizationsFailed { .. }
        | NoUsableStates { .. }
        | DegenerateColumn { .. }
        | ZeroColumn { .. } => numerical(e),
        _ => usage(e),
    }
}

pub type RunResult<T> = std::result::Result<T, Failure>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_failure_class() {
        assert_eq!(usage(anyhow::anyhow!("x")).exit_code(), 1);
        assert_eq!(numerical(anyhow::anyhow!("x")).exit_code(), 2);
    }

    #[test]
    fn library_errors_split_into_the_two_classes() {
        let diverged = chaotic_a2i::Error::Diverged {
            t: 0.1,
            component: 1,
            value: 1e9,
            bound: 1e6,
        };
        assert_eq!(classify(diverged).exit_code(), 2);
        let invalid = chaotic_a2i::Error::invalid("t_cs", "must be positive");
        assert_eq!(classify(invalid).exit_code(), 1);
    }

    #[test]
    fn stage_tags_show_up_in_the_message() {
        let f = numerical(anyhow::anyhow!("boom")).stage("measurement");
        assert!(format!("{f}").contains("stage measurement"));
    }
}
