//! Built-in model registry: the example processes the CLI can drive by
//! name. Arbitrary user code in configs is out of scope; these cover the
//! standard benchmark dynamics.

use std::sync::Arc;

use crate::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::levy::{JumpDistribution, LevyDensitySpec};
use crate::model::{
    FunctionOfMarkovSpec, InitialLaw, ItoModel, JumpSpec, ThetaDynamics, TimeChangeSpec,
};

/// A registry entry resolved from a config.
pub enum BuiltModel {
    /// Plain Ito dynamics simulated with `simulate_ito`.
    Ito(ItoModel),
    /// Time-changed Lévy process with its own simulation loop and the
    /// closed-form projection route.
    TimeChanged(TimeChangeSpec),
    /// Scalar function of a Markov process: simulated through an augmented
    /// system carrying the functional as its last coordinate, projected in
    /// closed form through the density of the underlying process.
    FunctionOfMarkov {
        sim: Box<ItoModel>,
        spec: Box<FunctionOfMarkovSpec>,
        /// Initial law of the functional itself.
        xi0: InitialLaw,
    },
}

impl std::fmt::Debug for BuiltModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BuiltModel::Ito(m) => f.debug_tuple("Ito").field(m).finish(),
            BuiltModel::TimeChanged(s) => f.debug_tuple("TimeChanged").field(s).finish(),
            BuiltModel::FunctionOfMarkov { sim, xi0, .. } => f
                .debug_struct("FunctionOfMarkov")
                .field("sim", sim)
                .field("xi0", xi0)
                .finish_non_exhaustive(),
        }
    }
}

impl BuiltModel {
    pub fn initial(&self) -> &InitialLaw {
        match self {
            BuiltModel::Ito(m) => &m.initial,
            BuiltModel::TimeChanged(s) => &s.initial,
            BuiltModel::FunctionOfMarkov { xi0, .. } => xi0,
        }
    }
}

fn get_f64(params: &serde_json::Map<String, serde_json::Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| CoreError::config(format!("model.params.{key}: expected a number"))),
    }
}

fn initial_from(params: &serde_json::Map<String, serde_json::Value>) -> Result<InitialLaw> {
    let x0 = get_f64(params, "x0", 0.0)?;
    let std0 = get_f64(params, "x0_std", 0.0)?;
    if std0 < 0.0 {
        return Err(CoreError::config("model.params.x0_std: must be nonnegative"));
    }
    if std0 == 0.0 {
        Ok(InitialLaw::Point(vec![x0]))
    } else {
        Ok(InitialLaw::Gaussian {
            mean: vec![x0],
            std: vec![std0],
        })
    }
}

/// Resolve a named model. Parameter errors name the offending field.
pub fn build_model(cfg: &ModelConfig) -> Result<BuiltModel> {
    let p = &cfg.params;
    match cfg.name.as_str() {
        // β and δ constant
        "constant" => {
            let beta = get_f64(p, "beta", 0.0)?;
            let delta = get_f64(p, "delta", 1.0)?;
            if delta < 0.0 {
                return Err(CoreError::config("model.params.delta: must be nonnegative"));
            }
            let model = ItoModel::scalar(initial_from(p)?, move |_, _| beta, move |_, _| delta)
                .with_bounds(beta.abs().max(1e-9), delta.max(1e-9));
            Ok(BuiltModel::Ito(model))
        }
        "brownian" => {
            let model = ItoModel::scalar(initial_from(p)?, |_, _| 0.0, |_, _| 1.0)
                .with_bounds(1e-9, 1.0);
            Ok(BuiltModel::Ito(model))
        }
        // Markov local volatility: δ = s0 + s1 tanh(ξ)
        "local_vol" => {
            let s0 = get_f64(p, "sigma0", 0.2)?;
            let s1 = get_f64(p, "sigma1", 0.1)?;
            if s0 <= s1.abs() {
                return Err(CoreError::config(
                    "model.params.sigma0: must exceed |sigma1| to keep the volatility positive",
                ));
            }
            let beta = get_f64(p, "beta", 0.0)?;
            let model = ItoModel::scalar(
                initial_from(p)?,
                move |_, _| beta,
                move |_, s| s0 + s1 * s.x[0].tanh(),
            )
            .with_bounds(beta.abs().max(1e-9), s0 + s1.abs());
            Ok(BuiltModel::Ito(model))
        }
        // path dependent: δ_t = v0 + v1 |running average of ξ|
        "running_average_vol" => {
            let v0 = get_f64(p, "v0", 0.2)?;
            let v1 = get_f64(p, "v1", 0.1)?;
            if v0 <= 0.0 || v1 < 0.0 {
                return Err(CoreError::config(
                    "model.params.v0/v1: need v0 > 0 and v1 >= 0",
                ));
            }
            // aux = [integral of ξ ds, running average]
            let model = ItoModel::scalar(
                initial_from(p)?,
                |_, _| 0.0,
                move |_, s| v0 + v1 * s.aux[1].abs(),
            )
            .with_aux(vec![0.0, 0.0], |t_next, dt, x, aux| {
                aux[0] += x[0] * dt;
                if t_next > 0.0 {
                    aux[1] = aux[0] / t_next;
                }
            })
            .with_bounds(1e-9, v0 + v1 * 10.0);
            Ok(BuiltModel::Ito(model))
        }
        // mean-reverting Markov diffusion
        "ou" => {
            let kappa = get_f64(p, "kappa", 1.0)?;
            let sigma = get_f64(p, "sigma", 1.0)?;
            if sigma <= 0.0 {
                return Err(CoreError::config("model.params.sigma: must be positive"));
            }
            let model = ItoModel::scalar(
                initial_from(p)?,
                move |_, s| -kappa * s.x[0],
                move |_, _| sigma,
            )
            .with_bounds(kappa.abs() * 50.0 + 1e-9, sigma);
            Ok(BuiltModel::Ito(model))
        }
        // compensated compound Poisson: ±jump_size equiprobable at rate λ
        "compound_poisson" => {
            let intensity = get_f64(p, "intensity", 1.0)?;
            if intensity < 0.0 {
                return Err(CoreError::config(
                    "model.params.intensity: must be nonnegative",
                ));
            }
            let size = get_f64(p, "jump_size", 1.0)?;
            if size <= 0.0 {
                return Err(CoreError::config("model.params.jump_size: must be positive"));
            }
            let levy = LevyDensitySpec::FiniteActivity {
                intensity,
                jump: JumpDistribution::Atoms {
                    atoms: vec![(0.5, vec![size]), (0.5, vec![-size])],
                },
            };
            let model = ItoModel::scalar(initial_from(p)?, |_, _| 0.0, |_, _| 0.0)
                .with_jumps(JumpSpec::PoissonDriven {
                    levy,
                    amplitude: None,
                    amplitude_state_free: true,
                })
                .with_bounds(1e-9, 1e-9);
            Ok(BuiltModel::Ito(model))
        }
        // sum of two independent mean-reverting components: ξ = z1 + z2.
        // Simulated through the augmented system (z1, z2, ξ); projected in
        // closed form through the Gaussian density of (z1, z2).
        "ou2_sum" => {
            let kappa = get_f64(p, "kappa", 1.0)?;
            let sigma = get_f64(p, "sigma", 1.0)?;
            if sigma <= 0.0 {
                return Err(CoreError::config("model.params.sigma: must be positive"));
            }
            let z1_0 = get_f64(p, "z1_0", 0.0)?;
            let z2_0 = get_f64(p, "z2_0", 0.0)?;
            let sim = ItoModel {
                dim: 3,
                noise_dim: 2,
                initial: InitialLaw::Point(vec![z1_0, z2_0, z1_0 + z2_0]),
                drift: Arc::new(move |_, s, out: &mut [f64]| {
                    out[0] = -kappa * s.x[0];
                    out[1] = -kappa * s.x[1];
                    out[2] = -kappa * (s.x[0] + s.x[1]);
                }),
                diffusion: Arc::new(move |_, _, out: &mut [f64]| {
                    // rows: z1, z2, ξ over 2 noise channels
                    out[0] = sigma;
                    out[1] = 0.0;
                    out[2] = 0.0;
                    out[3] = sigma;
                    out[4] = sigma;
                    out[5] = sigma;
                }),
                jumps: JumpSpec::None,
                aux_init: Vec::new(),
                aux_hook: None,
                bounds: crate::model::DeclaredBounds {
                    sup_drift: kappa * 100.0 + 1e-9,
                    sup_diffusion: 2.0 * sigma,
                },
                proj_coord: 2,
            };
            let spec = FunctionOfMarkovSpec {
                dim: 2,
                domain: vec![(-10.0, 10.0), (-10.0, 10.0)],
                f: Arc::new(|z: &[f64]| z[0] + z[1]),
                grad_f: Arc::new(|_, g: &mut [f64]| {
                    g[0] = 1.0;
                    g[1] = 1.0;
                }),
                hess_f: Arc::new(|_, h: &mut [f64]| h.iter_mut().for_each(|v| *v = 0.0)),
                q: Arc::new(move |t: f64, z: &[f64]| {
                    let var =
                        (sigma * sigma * (1.0 - (-2.0 * kappa * t).exp()) / (2.0 * kappa))
                            .max(1e-12);
                    let sd = var.sqrt();
                    let m1 = z1_0 * (-kappa * t).exp();
                    let m2 = z2_0 * (-kappa * t).exp();
                    crate::quad::normal_pdf((z[0] - m1) / sd) / sd
                        * crate::quad::normal_pdf((z[1] - m2) / sd)
                        / sd
                }),
                b_z: Arc::new(move |_, z: &[f64], out: &mut [f64]| {
                    out[0] = -kappa * z[0];
                    out[1] = -kappa * z[1];
                }),
                sigma_z: Arc::new(move |_, _, out: &mut [f64]| {
                    out[0] = sigma;
                    out[1] = 0.0;
                    out[2] = 0.0;
                    out[3] = sigma;
                }),
                jumps: None,
            };
            Ok(BuiltModel::FunctionOfMarkov {
                sim: Box::new(sim),
                spec: Box::new(spec),
                xi0: InitialLaw::Point(vec![z1_0 + z2_0]),
            })
        }
        // scalar Lévy base run on a stochastic or deterministic clock
        "time_changed_brownian" | "time_changed_levy" => {
            let b = get_f64(p, "base_drift", 0.0)?;
            let s2 = get_f64(p, "base_sigma2", 1.0)?;
            if s2 < 0.0 {
                return Err(CoreError::config(
                    "model.params.base_sigma2: must be nonnegative",
                ));
            }
            let theta = match p.get("theta") {
                None => ThetaDynamics::Deterministic(Arc::new(|_| 1.0)),
                Some(serde_json::Value::String(s)) if s == "linear" => {
                    let rate0 = get_f64(p, "theta_rate0", 1.0)?;
                    let slope = get_f64(p, "theta_slope", 1.0)?;
                    if rate0 <= 0.0 {
                        return Err(CoreError::config(
                            "model.params.theta_rate0: must be positive",
                        ));
                    }
                    ThetaDynamics::Deterministic(Arc::new(move |t: f64| rate0 + slope * t))
                }
                Some(serde_json::Value::String(s)) if s == "lognormal" => {
                    let vol = get_f64(p, "theta_vol", 1.0)?;
                    if vol <= 0.0 {
                        return Err(CoreError::config(
                            "model.params.theta_vol: must be positive",
                        ));
                    }
                    ThetaDynamics::Lognormal { vol }
                }
                Some(other) => {
                    return Err(CoreError::config(format!(
                        "model.params.theta: unknown dynamics {other}"
                    )))
                }
            };
            // optional compound-Poisson base jumps
            let base_levy = match p.get("base_jump_intensity") {
                None => None,
                Some(_) => {
                    let intensity = get_f64(p, "base_jump_intensity", 0.0)?;
                    if intensity < 0.0 {
                        return Err(CoreError::config(
                            "model.params.base_jump_intensity: must be nonnegative",
                        ));
                    }
                    let size = get_f64(p, "base_jump_size", 1.0)?;
                    if size <= 0.0 {
                        return Err(CoreError::config(
                            "model.params.base_jump_size: must be positive",
                        ));
                    }
                    Some(LevyDensitySpec::FiniteActivity {
                        intensity,
                        jump: JumpDistribution::Atoms {
                            atoms: vec![(0.5, vec![size]), (0.5, vec![-size])],
                        },
                    })
                }
            };
            Ok(BuiltModel::TimeChanged(TimeChangeSpec {
                base_drift: b,
                base_sigma2: s2,
                base_levy,
                theta,
                initial: initial_from(p)?,
            }))
        }
        other => Err(CoreError::config(format!(
            "model.name: unknown model '{other}' (expected one of: constant, brownian, \
             local_vol, running_average_vol, ou, ou2_sum, compound_poisson, \
             time_changed_brownian, time_changed_levy)"
        ))),
    }
}
