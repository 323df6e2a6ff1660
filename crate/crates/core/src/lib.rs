//! Decision-theoretic identification of output-error models.
//!
//! The impulse response `g` of an unknown discrete LTI system is summarized
//! nonparametrically by a mean and a weight matrix, either the classical
//! least-squares estimate with its precision or the Gaussian posterior under
//! a tuned DC kernel prior. A rational model `B(q)/F(q)` is then chosen by
//! minimizing the weighted risk `1/2 ||mean - g_theta||_W^2`. The first
//! choice reproduces the prediction error method (PEM); the second is the
//! regularized method, called BRM throughout this crate.
//!
//! ```no_run
//! use decision_sysid::prelude::*;
//!
//! let data = io::read_dataset_csv("data.csv").unwrap();
//! let orders = ModelOrders::new(0, 4, 0);
//! let fit = identify(&data, orders, &Method::Brm, &IdentifyOptions::default()).unwrap();
//! println!("{:?}", fit.decision.model);
//! ```

pub mod cli;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod lti;
pub mod optim;
pub mod posterior;
pub mod risk;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::experiment::{
        identify, normalized_error, run_monte_carlo, run_single, ErrorDistribution,
        ExperimentConfig, Identification, IdentifyOptions, Method,
    };
    pub use crate::io;
    pub use crate::kernel::{dc_kernel, marginal_log_likelihood, tune_hyperparameters, DcHyperParams, TunerOptions};
    pub use crate::lti::{
        build_toeplitz, impulse_response, impulse_response_jacobian, sample_white_noise, simulate,
        Dataset, ImpulseResponse, ModelOrders, RationalModel,
    };
    pub use crate::posterior::{gaussian_posterior, ls_summary, PosteriorSummary};
    pub use crate::risk::{minimize_risk, risk_value, Decision, RiskMinOptions, RiskSpec};
}
