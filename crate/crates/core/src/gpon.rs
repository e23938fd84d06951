//! GPON behaviours that modulate the noise seen by the quantum receiver:
//! upstream power levelling (PLSu) and TDM/DBA duty cycling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power Levelling Sequence upstream policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlsuPolicy {
    Off,
    /// Linear back-off of every ONT once more than `reference_count` are registered.
    Continuous {
        db_per_added_ont: f64,
        reference_count: usize,
    },
    /// Stepped launch levels; `thresholds[i]` is the smallest ONT count that
    /// selects `levels_dbm[i + 1]`.
    Discrete {
        levels_dbm: Vec<f64>,
        thresholds: Vec<usize>,
    },
}

impl Default for PlsuPolicy {
    fn default() -> Self {
        PlsuPolicy::Continuous {
            db_per_added_ont: 0.6,
            reference_count: 4,
        }
    }
}

impl PlsuPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            PlsuPolicy::Off => Ok(()),
            PlsuPolicy::Continuous { db_per_added_ont, .. } => {
                if *db_per_added_ont >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain("db_per_added_ont", *db_per_added_ont, ">= 0"))
                }
            }
            PlsuPolicy::Discrete { levels_dbm, thresholds } => {
                if levels_dbm.is_empty() || thresholds.len() + 1 != levels_dbm.len() {
                    return Err(Error::Invalid(
                        "discrete PLSu needs one more level than thresholds".into(),
                    ));
                }
                if levels_dbm.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(Error::Invalid(
                        "discrete PLSu levels must be strictly decreasing".into(),
                    ));
                }
                if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Invalid(
                        "discrete PLSu thresholds must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Launch power of each ONT when `n_active` ONTs are registered.
///
/// The discrete mode ignores `nominal_dbm`: its levels are absolute.
pub fn ont_launch_power_dbm(policy: &PlsuPolicy, n_active: usize, nominal_dbm: f64) -> Result<f64> {
    if n_active == 0 {
        return Err(Error::NoActiveOnts);
    }
    Ok(match policy {
        PlsuPolicy::Off => nominal_dbm,
        PlsuPolicy::Continuous {
            db_per_added_ont,
            reference_count,
        } => nominal_dbm - db_per_added_ont * n_active.saturating_sub(*reference_count) as f64,
        PlsuPolicy::Discrete { levels_dbm, thresholds } => {
            let idx = thresholds.iter().take_while(|&&t| n_active >= t).count();
            levels_dbm[idx]
        }
    })
}

/// How upstream transmission time is shared between ONTs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DbaMode {
    /// Every ONT provisioned in the topology owns an equal slice of the
    /// upstream frame, whether or not the others are lit.
    #[default]
    EqualProvisioned,
    /// The frame is shared equally among the currently active ONTs.
    EqualActive,
    /// Explicit per-ONT duty fractions.
    Explicit { duty: Vec<(String, f64)> },
}

/// Resolved per-ONT duty fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DbaLoad {
    duty: Vec<(String, f64)>,
}

impl DbaLoad {
    pub fn new(duty: Vec<(String, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (id, d) in &duty {
            if !(0.0..=1.0).contains(d) {
                return Err(Error::Invalid(format!("duty of `{id}` = {d} is outside [0, 1]")));
            }
            total += d;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::Invalid(format!(
                "DBA duty fractions sum to {total} > 1 (TDM allows one transmitter at a time)"
            )));
        }
        Ok(DbaLoad { duty })
    }

    /// Equal shares of `share_count` slices for each of `active`.
    pub fn equal(active: &[String], share_count: usize) -> Result<Self> {
        let share = if share_count == 0 {
            0.0
        } else {
            1.0 / share_count as f64
        };
        Self::new(active.iter().map(|id| (id.clone(), share)).collect())
    }

    pub fn resolve(mode: &DbaMode, active: &[String], provisioned: usize) -> Result<Self> {
        match mode {
            DbaMode::EqualProvisioned => Self::equal(active, provisioned.max(active.len())),
            DbaMode::EqualActive => Self::equal(active, active.len()),
            DbaMode::Explicit { duty } => {
                let picked = active
                    .iter()
                    .map(|id| {
                        duty.iter()
                            .find(|(d_id, _)| d_id == id)
                            .map(|(_, d)| (id.clone(), *d))
                            .ok_or_else(|| Error::Invalid(format!("no DBA duty given for active ONT `{id}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::new(picked)
            }
        }
    }

    pub fn duty(&self, ont: &str) -> Option<f64> {
        self.duty.iter().find(|(id, _)| id == ont).map(|(_, d)| *d)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.duty
    }
}

/// Time-averaged output power of `ont` given its DBA duty.
///
/// A zero duty yields `-inf` dBm (a silent ONT).
pub fn effective_upstream_power_dbm(
    policy: &PlsuPolicy,
    load: &DbaLoad,
    ont: &str,
    n_active: usize,
    nominal_dbm: f64,
) -> Result<f64> {
    let duty = load.duty(ont).ok_or_else(|| Error::UnknownNode(ont.to_string()))?;
    let launch = ont_launch_power_dbm(policy, n_active, nominal_dbm)?;
    Ok(launch + 10.0 * duty.log10())
}
