use serde::{Deserialize, Serialize};

use super::{AgentError, AgentSpec};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationEntry {
    pub template: AgentSpec,
    pub count: usize,
}

/// Additional agents sized as a fraction of the base count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraEntry {
    pub template: AgentSpec,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationMix {
    pub base: PopulationEntry,
    #[serde(default)]
    pub extras: Vec<ExtraEntry>,
}

impl PopulationMix {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.base.count == 0 {
            return Err(AgentError::Parameter("population base count must be positive".into()));
        }
        self.base.template.validate()?;
        for e in &self.extras {
            if !e.fraction.is_finite() || e.fraction < 0.0 {
                return Err(AgentError::Parameter(format!("extra fraction {} must be non-negative", e.fraction)));
            }
            e.template.validate()?;
        }
        Ok(())
    }

    /// Base count plus each extra's `round(fraction * base)`.
    pub fn size(&self) -> usize {
        self.base.count + self.extras.iter().map(|e| extra_count(e.fraction, self.base.count)).sum::<usize>()
    }
}

fn extra_count(fraction: f64, base: usize) -> usize {
    (fraction * base as f64).round() as usize
}

/// Expands a mix into concrete agent specs, base agents first, each with its
/// own seed derived from `master_seed` and its position.
pub fn sample_population(mix: &PopulationMix, master_seed: u64) -> Result<Vec<AgentSpec>, AgentError> {
    mix.validate()?;
    let mut out = vec![mix.base.template.clone(); mix.base.count];
    for e in &mix.extras {
        out.extend(std::iter::repeat(e.template.clone()).take(extra_count(e.fraction, mix.base.count)));
    }
    for (i, spec) in out.iter_mut().enumerate() {
        spec.agent_seed = rng::derive(master_seed, &[i as u64]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    fn mix(base: usize, fraction: f64) -> PopulationMix {
        PopulationMix {
            base: PopulationEntry { template: AgentSpec::llm("gpt-4o", 0), count: base },
            extras: vec![ExtraEntry { template: AgentSpec::scripted(AgentKind::LocalSearch, 0), fraction }],
        }
    }

    #[test]
    fn twenty_percent_extra_rounds() {
        let pop = sample_population(&mix(69, 0.2), 5).unwrap();
        assert_eq!(pop.len(), 83);
        assert_eq!(mix(69, 0.2).size(), 83);
        assert_eq!(pop.iter().filter(|s| s.kind == AgentKind::LocalSearch).count(), 14);
        assert!(pop[..69].iter().all(|s| s.kind == AgentKind::Llm));
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = sample_population(&mix(20, 0.5), 1).unwrap();
        let b = sample_population(&mix(20, 0.5), 1).unwrap();
        assert_eq!(a, b);
        let mut seeds: Vec<u64> = a.iter().map(|s| s.agent_seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 30);
        assert_ne!(sample_population(&mix(20, 0.5), 2).unwrap()[0].agent_seed, a[0].agent_seed);
    }

    #[test]
    fn invalid_mixes_rejected() {
        assert!(sample_population(&mix(0, 0.2), 1).is_err());
        assert!(sample_population(&mix(5, -0.1), 1).is_err());
    }
}
