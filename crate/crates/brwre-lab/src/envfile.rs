//! JSON environment files.
//!
//! ```json
//! {
//!   "name": "boundary_pm1",
//!   "lattice_step": 1.0,
//!   "states": [
//!     { "prob": 0.5, "outcomes": [ { "prob": 1.0, "children": [1, -1, 0] } ] },
//!     { "prob": 0.5, "recipe": { "target": [[-1, 0.5], [1, 0.5]], "spread": 0 } }
//!   ]
//! }
//! ```
//!
//! Each state gives exactly one of
//! - `outcomes`: explicit `(prob, children)` list, optionally with a `tail`
//!   `{alpha, growth, shift, weight}` of shell outcomes carrying probability `weight`;
//! - `recipe`: boundary law built from a target step measure `[[index, mass], ...]`
//!   with randomized child counts (`spread` widens the count distribution);
//! - `shell`: boundary law `{alpha, growth, shift}` with a heavy shell tail.
//!
//! Children are lattice indices; displacements are `index · lattice_step`.
//! Unknown keys are rejected.

use std::path::Path;
use std::sync::Arc;

use brwre_core::env::{EnvironmentLaw, Outcome, PointProcessLaw, ShellTail};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    #[serde(default)]
    pub name: String,
    pub lattice_step: f64,
    pub states: Vec<StateSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<OutcomeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<RecipeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<ShellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub prob: f64,
    pub children: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub alpha: f64,
    pub growth: f64,
    #[serde(default)]
    pub shift: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeSpec {
    pub target: Vec<(i64, f64)>,
    #[serde(default)]
    pub spread: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub alpha: f64,
    pub growth: f64,
    #[serde(default)]
    pub shift: i64,
}

impl EnvFile {
    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!("cannot read environment {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> LabResult<Arc<EnvironmentLaw>> {
        if !(self.lattice_step > 0.0) {
            return Err(LabError::Config("lattice_step must be positive".into()));
        }
        let states = self
            .states
            .iter()
            .map(|s| Ok((s.prob, s.build(self.lattice_step)?)))
            .collect::<LabResult<Vec<_>>>()?;
        Ok(Arc::new(EnvironmentLaw::new(states)?))
    }
}

impl StateSpec {
    pub fn build(&self, step: f64) -> LabResult<PointProcessLaw> {
        let given = [
            self.outcomes.is_some(),
            self.recipe.is_some(),
            self.shell.is_some(),
        ];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(LabError::Config(
                "each state needs exactly one of outcomes, recipe, shell".into(),
            ));
        }
        if self.tail.is_some() && self.outcomes.is_none() {
            return Err(LabError::Config(
                "tail is only allowed alongside outcomes".into(),
            ));
        }
        if let Some(list) = &self.outcomes {
            let outcomes = list
                .iter()
                .map(|o| Outcome::new(o.prob, o.children.clone()))
                .collect();
            let tail = match &self.tail {
                Some(t) => Some(ShellTail::new(step, t.alpha, t.growth, t.shift, t.weight)?),
                None => None,
            };
            return Ok(PointProcessLaw::with_tail(step, outcomes, tail)?);
        }
        if let Some(r) = &self.recipe {
            return Ok(PointProcessLaw::boundary_recipe(step, &r.target, r.spread)?);
        }
        let sh = self.shell.as_ref().expect("checked above");
        Ok(PointProcessLaw::shell_boundary(
            step, sh.alpha, sh.growth, sh.shift,
        )?)
    }
}

/// Environments used by the acceptance suite; the same definitions ship under `envs/`.
pub mod builtin {
    use super::*;

    fn recipe(prob: f64, target: &[(i64, f64)], spread: u32) -> StateSpec {
        StateSpec {
            prob,
            recipe: Some(RecipeSpec {
                target: target.to_vec(),
                spread,
            }),
            ..Default::default()
        }
    }

    fn outcomes(list: &[(f64, &[i64])]) -> StateSpec {
        let outcomes = list
            .iter()
            .map(|&(prob, ch)| OutcomeSpec {
                prob,
                children: ch.to_vec(),
            })
            .collect();
        StateSpec {
            prob: 1.0,
            outcomes: Some(outcomes),
            ..Default::default()
        }
    }

    fn shell(alpha: f64) -> StateSpec {
        StateSpec {
            prob: 1.0,
            shell: Some(ShellSpec {
                alpha,
                growth: 1.0,
                shift: 0,
            }),
            ..Default::default()
        }
    }

    fn env(name: &str, states: Vec<StateSpec>) -> EnvFile {
        EnvFile {
            name: name.into(),
            lattice_step: 1.0,
            states,
        }
    }

    pub fn boundary_pm1() -> EnvFile {
        env("boundary_pm1", vec![recipe(1.0, &[(-1, 0.5), (1, 0.5)], 0)])
    }

    /// Two offspring laws sharing the fair `±1` step measure.
    pub fn two_state_same_step() -> EnvFile {
        env(
            "two_state_same_step",
            vec![
                recipe(0.5, &[(-1, 0.5), (1, 0.5)], 0),
                recipe(0.5, &[(-1, 0.5), (1, 0.5)], 2),
            ],
        )
    }

    /// Two offspring laws with different step measures, both skip-free downward.
    pub fn two_state_mixed() -> EnvFile {
        env(
            "two_state_mixed",
            vec![
                recipe(0.5, &[(-1, 0.5), (1, 0.5)], 0),
                recipe(0.5, &[(-1, 0.4), (0, 0.2), (1, 0.4)], 1),
            ],
        )
    }

    /// One child at `+1` and one at `−1` with probability one: not in the boundary case.
    pub fn deterministic_pm1() -> EnvFile {
        env("deterministic_pm1", vec![outcomes(&[(1.0, &[1, -1])])])
    }

    pub fn single_child_at_zero() -> EnvFile {
        env("single_child_at_zero", vec![outcomes(&[(1.0, &[0])])])
    }

    /// Heavy shell tail: `E[Y log₊ Y] < ∞ = E[Y log₊² Y]`.
    pub fn shell_heavy() -> EnvFile {
        env("shell_heavy", vec![shell(2.5)])
    }

    /// Light shell tail: every moment in the criterion is finite.
    pub fn shell_light() -> EnvFile {
        env("shell_light", vec![shell(4.0)])
    }

    pub fn all() -> Vec<EnvFile> {
        vec![
            boundary_pm1(),
            two_state_same_step(),
            two_state_mixed(),
            deterministic_pm1(),
            single_child_at_zero(),
            shell_heavy(),
            shell_light(),
        ]
    }
}
