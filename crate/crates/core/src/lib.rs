//! Policy optimization with self-learned Lyapunov critics, plus a sample-based
//! certifier that searches for forward-invariant sublevel bands of the learned
//! critic under the almost-Lyapunov conditions.

pub mod envs;
mod error;
pub mod lyapunov;
pub mod nn;
pub mod policy_opt;
pub mod validator;

pub use error::{Error, Result};
pub use envs::{ControlSystem, EnvConfig, EnvSpec, EpisodeClock, Interval};
pub use lyapunov::{Candidate, CriticConfig, LyapunovCritic, QuadraticCandidate};
pub use nn::{Activation, GaussianPolicy, Mlp};
pub use policy_opt::{IterationMetrics, PolycConfig, PolycTrainer};
pub use validator::{CertificationReport, CertifyConfig, Landscape, MonteCarloReport};
