//! JSON forms of MDPs and policies.
//!
//! `P` is either the dense nested array (`[s][a][s']` when homogeneous,
//! `[h][s][a][s']` otherwise) or, for kernels too large to spell out densely,
//! `{"rows": [[[next, prob], ...], ...], "index": [...]}` where `index` is
//! the flat `(step, s, a)` -> row-id table.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ActionDist, DetPolicy, EachStepMixture, FirstStepMixture, KernelBuilder, Policy, PolicyClass, SparseRow, StochPolicy, TabularMdp};
use crate::error::{config, Result};

/// Kernels up to this many dense entries are written in nested-array form.
const DENSE_WRITE_LIMIT: usize = 1_000_000;

#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpJson {
    pub S: usize,
    pub A: usize,
    pub H: usize,
    pub rho: Vec<f64>,
    pub homogeneous: bool,
    pub P: Value,
    pub R: Vec<Vec<f64>>,
    pub R_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompactKernel {
    rows: Vec<Vec<(usize, f64)>>,
    index: Vec<u32>,
}

impl MdpJson {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let kernel = mdp.kernel();
        let steps = kernel.stored_steps();
        let p = if steps * s_n * a_n * s_n <= DENSE_WRITE_LIMIT {
            let block = |h: usize| -> Value {
                let states: Vec<Vec<Vec<f64>>> = (0..s_n)
                    .map(|s| {
                        (0..a_n)
                            .map(|a| {
                                let mut dense = vec![0.0; s_n];
                                for (t, q) in kernel.row(h, s, a).iter() {
                                    dense[t] = q;
                                }
                                dense
                            })
                            .collect()
                    })
                    .collect();
                serde_json::to_value(states).expect("dense kernel serializes")
            };
            if kernel.is_homogeneous() {
                block(0)
            } else {
                Value::Array((0..steps).map(block).collect())
            }
        } else {
            let compact = CompactKernel {
                rows: kernel.rows().iter().map(|r| r.iter().collect()).collect(),
                index: (0..steps)
                    .flat_map(|h| (0..s_n).flat_map(move |s| (0..a_n).map(move |a| (h, s, a))))
                    .map(|(h, s, a)| kernel.row_id(h, s, a) as u32)
                    .collect(),
            };
            serde_json::to_value(compact).expect("compact kernel serializes")
        };
        Self {
            S: s_n,
            A: a_n,
            H: h_n,
            rho: mdp.initial_dist(),
            homogeneous: kernel.is_homogeneous(),
            P: p,
            R: mdp.rewards().chunks(a_n).map(<[f64]>::to_vec).collect(),
            R_max: mdp.return_bound(),
        }
    }

    pub fn to_mdp(&self) -> Result<TabularMdp> {
        let mut builder = KernelBuilder::new(self.S, self.A, self.H, self.homogeneous);
        let steps = builder.stored_steps();
        match &self.P {
            Value::Object(_) => {
                let compact: CompactKernel = serde_json::from_value(self.P.clone())?;
                if compact.index.len() != steps * self.S * self.A {
                    return Err(config(format!(
                        "P.index has {} entries, expected {}",
                        compact.index.len(),
                        steps * self.S * self.A
                    )));
                }
                let ids: Vec<u32> = compact.rows.into_iter().map(|r| builder.intern(SparseRow::new(r))).collect();
                for (slot, &raw) in compact.index.iter().enumerate() {
                    let id = *ids.get(raw as usize).ok_or_else(|| config(format!("P.index refers to missing row {raw}")))?;
                    let a = slot % self.A;
                    let s = (slot / self.A) % self.S;
                    let h = slot / (self.A * self.S);
                    builder.set_row_id(h, s, a, id);
                }
            }
            Value::Array(_) => {
                let blocks: Vec<Vec<Vec<Vec<f64>>>> = if self.homogeneous {
                    vec![serde_json::from_value(self.P.clone())?]
                } else {
                    serde_json::from_value(self.P.clone())?
                };
                if blocks.len() != steps {
                    return Err(config(format!("P has {} steps, expected {steps}", blocks.len())));
                }
                for (h, block) in blocks.iter().enumerate() {
                    if block.len() != self.S {
                        return Err(config(format!("P step {h} has {} states, expected {}", block.len(), self.S)));
                    }
                    for (s, actions) in block.iter().enumerate() {
                        if actions.len() != self.A {
                            return Err(config(format!("P[{h}][{s}] has {} actions, expected {}", actions.len(), self.A)));
                        }
                        for (a, row) in actions.iter().enumerate() {
                            if row.len() != self.S {
                                return Err(config(format!("P[{h}][{s}][{a}] has length {}", row.len())));
                            }
                            builder.set_row(h, s, a, SparseRow::from_dense(row));
                        }
                    }
                }
            }
            _ => return Err(config("P must be an array or an object with rows/index")),
        }
        if self.R.len() != self.S || self.R.iter().any(|r| r.len() != self.A) {
            return Err(config("R must be an S x A table"));
        }
        let rewards = self.R.iter().flatten().copied().collect();
        TabularMdp::new(self.H, &self.rho, builder.build()?, rewards, self.R_max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyJson {
    /// `actions` is `[s]` when stationary, `[h][s]` flattened otherwise.
    Deterministic { num_states: usize, num_actions: usize, steps: Option<usize>, actions: Vec<usize> },
    Stochastic { num_states: usize, num_actions: usize, steps: Option<usize>, probs: Vec<Vec<f64>> },
    EachStepMixture { weights: Vec<f64>, class: Vec<PolicyJson> },
    FirstStepMixture { weights: Vec<f64>, members: Vec<PolicyJson> },
}

impl PolicyJson {
    pub fn from_policy(policy: &Policy) -> Self {
        match policy {
            Policy::Det(p) => Self::from_det(p),
            Policy::Stoch(p) => {
                let (num_states, num_actions) = policy.dims();
                let probs = p
                    .table()
                    .iter()
                    .map(|d| match d {
                        ActionDist::Point(a) => {
                            let mut v = vec![0.0; num_actions];
                            v[*a] = 1.0;
                            v
                        }
                        ActionDist::Uniform => vec![1.0 / num_actions as f64; num_actions],
                        ActionDist::Probs(q) => q.clone(),
                    })
                    .collect();
                PolicyJson::Stochastic { num_states, num_actions, steps: p.steps(), probs }
            }
            Policy::EachStep(m) => PolicyJson::EachStepMixture {
                weights: m.weights().to_vec(),
                class: m.class().members().iter().map(Self::from_det).collect(),
            },
            Policy::FirstStep(m) => PolicyJson::FirstStepMixture {
                weights: m.weights().to_vec(),
                members: m.members().iter().map(Self::from_policy).collect(),
            },
        }
    }

    fn from_det(p: &DetPolicy) -> Self {
        PolicyJson::Deterministic {
            num_states: p.num_states(),
            num_actions: p.num_actions(),
            steps: p.steps(),
            actions: p.table().iter().map(|&a| a as usize).collect(),
        }
    }

    pub fn to_det(&self) -> Result<DetPolicy> {
        match self {
            PolicyJson::Deterministic { num_states, num_actions, steps, actions } => match steps {
                None => {
                    if actions.len() != *num_states {
                        return Err(config("stationary action table length must equal num_states"));
                    }
                    DetPolicy::stationary(*num_actions, actions.clone())
                }
                Some(steps) => DetPolicy::step_indexed(*num_states, *num_actions, *steps, actions.clone()),
            },
            _ => Err(config("expected a deterministic policy")),
        }
    }

    pub fn to_policy(&self) -> Result<Policy> {
        Ok(match self {
            PolicyJson::Deterministic { .. } => Policy::Det(self.to_det()?),
            PolicyJson::Stochastic { num_states, num_actions, steps, probs } => {
                let table = probs.iter().cloned().map(ActionDist::Probs).collect();
                Policy::Stoch(match steps {
                    None => {
                        if probs.len() != *num_states {
                            return Err(config("stationary probability table length must equal num_states"));
                        }
                        StochPolicy::stationary(*num_actions, table)?
                    }
                    Some(steps) => StochPolicy::step_indexed(*num_states, *num_actions, *steps, table)?,
                })
            }
            PolicyJson::EachStepMixture { weights, class } => {
                let members = class.iter().map(PolicyJson::to_det).collect::<Result<Vec<_>>>()?;
                Policy::EachStep(EachStepMixture::new(Arc::new(PolicyClass::new(members)?), weights.clone())?)
            }
            PolicyJson::FirstStepMixture { weights, members } => {
                let members = members.iter().map(PolicyJson::to_policy).collect::<Result<Vec<_>>>()?;
                Policy::FirstStep(FirstStepMixture::new(weights.clone(), members)?)
            }
        })
    }
}

/// An MDP with its expert and, optionally, a finite policy class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpBundle {
    pub mdp: MdpJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<PolicyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<Vec<PolicyJson>>,
}

impl MdpBundle {
    pub fn new(mdp: &TabularMdp, expert: Option<&DetPolicy>, class: Option<&PolicyClass>) -> Self {
        Self {
            mdp: MdpJson::from_mdp(mdp),
            expert: expert.map(PolicyJson::from_det),
            class: class.map(|c| c.members().iter().map(PolicyJson::from_det).collect()),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn expert(&self) -> Result<Option<DetPolicy>> {
        self.expert.as_ref().map(PolicyJson::to_det).transpose()
    }

    pub fn policy_class(&self) -> Result<Option<PolicyClass>> {
        self.class
            .as_ref()
            .map(|c| PolicyClass::new(c.iter().map(PolicyJson::to_det).collect::<Result<Vec<_>>>()?))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TabularMdp {
        let p = [0.25, 0.75, 1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        TabularMdp::from_dense(2, 2, 3, &[0.4, 0.6], false, &p, vec![0.0, 1.0, 0.5, 0.25], 3.0).unwrap()
    }

    #[test]
    fn dense_round_trip() {
        let mdp = small();
        let json = serde_json::to_string(&MdpJson::from_mdp(&mdp)).unwrap();
        assert!(json.contains("\"homogeneous\":false"));
        let back: MdpJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_mdp().unwrap(), mdp);
    }

    #[test]
    fn compact_form_parses() {
        let text = r#"{"S":2,"A":1,"H":3,"rho":[1,0],"homogeneous":true,
            "P":{"rows":[[[1,1.0]],[[0,0.5],[1,0.5]]],"index":[0,1]},
            "R":[[0.0],[1.0]],"R_max":3}"#;
        let mdp = serde_json::from_str::<MdpJson>(text).unwrap().to_mdp().unwrap();
        assert_eq!(mdp.transition_prob(0, 0, 0, 1), 1.0);
        assert_eq!(mdp.transition_prob(1, 1, 0, 0), 0.5);
    }

    #[test]
    fn malformed_kernel_is_rejected() {
        let text = r#"{"S":2,"A":1,"H":2,"rho":[1,0],"homogeneous":true,
            "P":[[[0.5,0.4]],[[0,1]]],"R":[[0.0],[1.0]],"R_max":2}"#;
        assert!(serde_json::from_str::<MdpJson>(text).unwrap().to_mdp().is_err());
    }

    #[test]
    fn policies_serialize_with_kind_tag() {
        let det = DetPolicy::stationary(3, vec![2, 0]).unwrap();
        let v = serde_json::to_value(PolicyJson::from_det(&det)).unwrap();
        assert_eq!(v["kind"], "deterministic");
        let class = Arc::new(PolicyClass::new(vec![det.clone(), DetPolicy::stationary(3, vec![1, 1]).unwrap()]).unwrap());
        let mix = Policy::EachStep(EachStepMixture::new(class, vec![0.5, 0.5]).unwrap());
        let json = serde_json::to_string(&PolicyJson::from_policy(&mix)).unwrap();
        let back = serde_json::from_str::<PolicyJson>(&json).unwrap().to_policy().unwrap();
        assert_eq!(back, mix);
    }
}
