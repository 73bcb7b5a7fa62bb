//! Named experiment presets, replicated batch runs with simulated experts,
//! and their CSV/JSON outputs.

mod output;
mod runner;

pub use output::{aggregate, read_runs_csv, write_outputs, AggregateRow};
pub use runner::{observe, run_experiment, ExperimentResult, RunRecord};

use crate::abc::{AbcConfig, Adjustment, InclusionVector};
use crate::design::DEFAULT_DELTA;
use crate::error::{invalid, Result};
use crate::feedback::DEFAULT_MIXTURE_DRAWS;
use crate::simulators::{Model, ParameterVector, PriorBox, TurinSettings};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[serde(rename = "gandk-lowsim")]
    GAndKLowSim,
    TurinMisspec,
    GaussianSensitivity,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::GAndKLowSim,
        Preset::TurinMisspec,
        Preset::GaussianSensitivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::GAndKLowSim => "gandk-lowsim",
            Preset::TurinMisspec => "turin-misspec",
            Preset::GaussianSensitivity => "gaussian-sensitivity",
        }
    }

    /// Model, prior, true parameter and the statistics the simulated expert
    /// regards as relevant at misspecification level `zeta`.
    pub fn scenario(self, zeta: f64) -> Scenario {
        match self {
            Preset::GAndKLowSim => Scenario {
                model: Model::GAndK { n_obs: 10_000 },
                prior: PriorBox::uniform(4, 0.0, 10.0).expect("valid box"),
                truth: ParameterVector(vec![3.0, 4.0, 2.0, 1.0]),
                zeta: 0.0,
                relevant: InclusionVector::from_indices(15, &[0, 1, 2, 3]),
            },
            Preset::TurinMisspec => {
                let mut relevant = InclusionVector::ones(6);
                if zeta > 0.0 {
                    // var(m0) carries the injected misspecification.
                    relevant.set(3, false);
                }
                Scenario {
                    model: Model::Turin(TurinSettings {
                        bandwidth: 4e9,
                        n_s: 801,
                        n_real: 300,
                    }),
                    prior: PriorBox::new(vec![(1e-10, 3e-9), (1e-9, 2e-8), (1e8, 4e9)])
                        .expect("valid box"),
                    truth: ParameterVector(vec![1e-9, 1e-8, 1e9]),
                    zeta,
                    relevant,
                }
            }
            Preset::GaussianSensitivity => Scenario {
                model: Model::Gaussian { n_obs: 500 },
                prior: PriorBox::new(vec![(-5.0, 5.0), (0.0, 5.0)]).expect("valid box"),
                truth: ParameterVector(vec![0.0, 2.0]),
                zeta: 0.0,
                relevant: InclusionVector::from_indices(5, &[0, 1]),
            },
        }
    }

    pub fn defaults(self) -> ExperimentSpec {
        let base = ExperimentSpec {
            preset: self,
            n_sim: vec![2000],
            epsilon: 0.05,
            reliability: vec![0.95],
            expert_reliability: None,
            prior_inclusion: 0.5,
            delta: vec![DEFAULT_DELTA],
            zeta: vec![0.0],
            replicates: 100,
            seed: 0,
            methods: vec![Method::Hitl, Method::LinearAll],
            n: 4000,
            adjustment: Adjustment::Linear,
            logit_transform: true,
            mixture_draws: DEFAULT_MIXTURE_DRAWS,
            reference: None,
            write_samples: true,
        };
        match self {
            Preset::GAndKLowSim => ExperimentSpec {
                n_sim: vec![200, 250, 300, 350, 400, 450],
                epsilon: 0.1,
                methods: vec![
                    Method::Hitl,
                    Method::Random,
                    Method::LinearAll,
                    Method::RidgeAll,
                ],
                reference: Some(ReferenceSpec {
                    n_sim: 10_000,
                    epsilon: 0.01,
                }),
                ..base
            },
            Preset::TurinMisspec => ExperimentSpec {
                zeta: vec![0.0, 5.0, 10.0],
                expert_reliability: Some(1.0),
                replicates: 20,
                methods: vec![Method::Hitl, Method::LinearAll, Method::RidgeAll],
                ..base
            },
            Preset::GaussianSensitivity => ExperimentSpec {
                reliability: vec![1.0, 0.95, 0.9, 0.8],
                delta: vec![0.02, 0.04, 0.06, 0.08, 0.1],
                methods: vec![Method::Hitl],
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown preset {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub prior: PriorBox,
    pub truth: ParameterVector,
    pub zeta: f64,
    /// Target of the simulated expert.
    pub relevant: InclusionVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Utility-driven expert querying.
    Hitl,
    /// Random-order querying with the same stopping rule.
    Random,
    /// Regression ABC with every statistic in the pool.
    LinearAll,
    RidgeAll,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hitl => "hitl",
            Method::Random => "random",
            Method::LinearAll => "linear-all",
            Method::RidgeAll => "ridge-all",
        }
    }

    pub fn queries_expert(self) -> bool {
        matches!(self, Method::Hitl | Method::Random)
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Hitl,
            Method::Random,
            Method::LinearAll,
            Method::RidgeAll,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub n_sim: usize,
    pub epsilon: f64,
}

/// One batch experiment: a preset plus overrides. Every combination of the
/// list-valued fields is run `replicates` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub n_sim: Vec<usize>,
    pub epsilon: f64,
    /// Feedback reliability assumed by the belief model.
    pub reliability: Vec<f64>,
    /// Actual reliability of the simulated expert; defaults to `reliability`.
    pub expert_reliability: Option<f64>,
    pub prior_inclusion: f64,
    pub delta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub n: usize,
    pub adjustment: Adjustment,
    pub logit_transform: bool,
    pub mixture_draws: usize,
    pub reference: Option<ReferenceSpec>,
    pub write_samples: bool,
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| invalid(format!("bad value {v:?} for {key}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("bad value {value:?} for {key}")))
}

impl ExperimentSpec {
    /// Applies one `key=value` override. List-valued keys take
    /// comma-separated values.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| invalid(format!("override {assignment:?} is not key=value")))?;
        match key.trim() {
            "n_sim" => self.n_sim = parse_list(key, value)?,
            "epsilon" => self.epsilon = parse_one(key, value)?,
            "reliability" | "pi" => self.reliability = parse_list(key, value)?,
            "expert_reliability" => self.expert_reliability = Some(parse_one(key, value)?),
            "prior_inclusion" | "rho" => self.prior_inclusion = parse_one(key, value)?,
            "delta" => self.delta = parse_list(key, value)?,
            "zeta" => self.zeta = parse_list(key, value)?,
            "replicates" => self.replicates = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "n" => self.n = parse_one(key, value)?,
            "mixture_draws" => self.mixture_draws = parse_one(key, value)?,
            "logit" => self.logit_transform = parse_one(key, value)?,
            "samples" => self.write_samples = parse_one(key, value)?,
            "adjustment" => {
                self.adjustment = match value.trim() {
                    "none" => Adjustment::None,
                    "linear" => Adjustment::Linear,
                    "ridge" => Adjustment::Ridge,
                    other => return Err(invalid(format!("unknown adjustment {other:?}"))),
                }
            }
            "reference_n_sim" => {
                let mut r = self.reference.unwrap_or(ReferenceSpec {
                    n_sim: 10_000,
                    epsilon: 0.01,
                });
                r.n_sim = parse_one(key, value)?;
                self.reference = Some(r);
            }
            "reference_epsilon" => {
                let mut r = self.reference.unwrap_or(ReferenceSpec {
                    n_sim: 10_000,
                    epsilon: 0.01,
                });
                r.epsilon = parse_one(key, value)?;
                self.reference = Some(r);
            }
            "reference" if value.trim() == "none" => self.reference = None,
            other => return Err(invalid(format!("unknown override key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sim.is_empty()
            || self.reliability.is_empty()
            || self.delta.is_empty()
            || self.zeta.is_empty()
        {
            return Err(invalid("list-valued settings must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicate count must be positive"));
        }
        if self.preset != Preset::TurinMisspec && self.zeta.iter().any(|&z| z != 0.0) {
            return Err(invalid(
                "misspecification noise applies to the radio-channel preset only",
            ));
        }
        let q = self.preset.scenario(0.0).prior.dim();
        for &n_sim in &self.n_sim {
            self.abc_config(self.adjustment).validate(n_sim, q)?;
        }
        Ok(())
    }

    pub fn abc_config(&self, adjustment: Adjustment) -> AbcConfig {
        AbcConfig {
            epsilon: self.epsilon,
            adjustment,
            n: self.n,
            logit_transform: self.logit_transform,
            ..AbcConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_by_name() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.name()));
            p.defaults().validate().unwrap();
        }
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn defaults_encode_reference_settings() {
        let t = Preset::TurinMisspec.defaults();
        assert_eq!((t.n_sim.clone(), t.epsilon, t.n), (vec![2000], 0.05, 4000));
        let s = Preset::TurinMisspec.scenario(10.0);
        assert_eq!(s.relevant.bits(), "111011");
        assert_eq!(Preset::TurinMisspec.scenario(0.0).relevant.bits(), "111111");
        let g = Preset::GAndKLowSim.defaults();
        assert_eq!(g.epsilon, 0.1);
        assert_eq!(
            g.reference,
            Some(ReferenceSpec {
                n_sim: 10_000,
                epsilon: 0.01
            })
        );
        let gauss = Preset::GaussianSensitivity.scenario(0.0);
        assert_eq!(gauss.relevant.bits(), "11000");
    }

    #[test]
    fn overrides() {
        let mut s = Preset::GaussianSensitivity.defaults();
        s.apply_override("pi=1.0,0.8").unwrap();
        s.apply_override("delta=0.02").unwrap();
        s.apply_override("replicates=3").unwrap();
        s.apply_override("methods=hitl,linear-all").unwrap();
        s.apply_override("adjustment=ridge").unwrap();
        assert_eq!(s.reliability, vec![1.0, 0.8]);
        assert_eq!(s.delta, vec![0.02]);
        assert_eq!(s.replicates, 3);
        assert_eq!(s.methods, vec![Method::Hitl, Method::LinearAll]);
        assert_eq!(s.adjustment, Adjustment::Ridge);
        assert!(s.apply_override("bogus=1").is_err());
        assert!(s.apply_override("delta").is_err());
        assert!(s.apply_override("replicates=x").is_err());
        s.apply_override("zeta=5").unwrap();
        assert!(s.validate().is_err());
    }
}
