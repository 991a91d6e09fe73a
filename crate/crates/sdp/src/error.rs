use crate::certificate::SolveCertificate;
use crate::solver::SdpSolution;

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// The iteration budget ran out. Carries the best iterate seen.
    #[error("no convergence after {} iterations (gap {:.3e}, primal infeasibility {:.3e})",
        .certificate.iterations, .certificate.duality_gap, .certificate.primal_infeasibility)]
    MaxIterations {
        solution: Box<SdpSolution>,
        certificate: SolveCertificate,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A dual ray certifies that no PSD point satisfies the constraints.
    #[error("primal infeasible: {0}")]
    Infeasible(String),

    #[error("primal unbounded: {0}")]
    Unbounded(String),

    #[error("text format error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
