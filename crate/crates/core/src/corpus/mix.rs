use num_rational::Ratio;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{to_hours, total_duration, CorpusError, Duration, Utterance};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Real and synthetic hours trade off against a fixed total.
    #[default]
    ConstantTotal,
    /// Synthetic hours are added on top of a fixed real budget.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    #[serde(default)]
    pub mode: MixMode,
    pub real_hours: f64,
    pub synthetic_hours: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub mode: MixMode,
    pub real_target_hours: f64,
    pub synthetic_target_hours: f64,
    pub real_hours: f64,
    pub synthetic_hours: f64,
    pub real_utterances: usize,
    pub synthetic_utterances: usize,
}

/// Shuffle `pool` and take utterances until their total reaches `hours`.
/// The utterance that crosses the target is included.
fn take_hours(pool: &[Utterance], hours: f64, seed: u64, what: &str) -> Result<Vec<Utterance>, CorpusError> {
    let available = to_hours(total_duration(pool));
    if available < hours {
        return Err(CorpusError::InsufficientData {
            what: what.into(),
            needed_hours: hours,
            available_hours: available,
            deficit_hours: hours - available,
        });
    }
    if hours <= 0.0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng(seed));
    let target_secs = hours * 3600.0;
    let mut acc: Duration = Ratio::from_integer(0);
    let mut out = Vec::new();
    for i in order {
        if super::to_secs(acc) >= target_secs {
            break;
        }
        acc += pool[i].exact_duration();
        out.push(pool[i].clone());
    }
    Ok(out)
}

/// Sample `real_hours` from `real` and `synthetic_hours` from `synthetic`,
/// then interleave the two with a seeded shuffle.
///
/// Both sources are drawn with the same derived seed, so swapping the
/// sources together with their hour targets selects the same utterances.
pub fn mix(real: &[Utterance], synthetic: &[Utterance], spec: &MixSpec) -> Result<(Vec<Utterance>, MixReport), CorpusError> {
    for (name, h) in [("real_hours", spec.real_hours), ("synthetic_hours", spec.synthetic_hours)] {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(CorpusError::InvalidInput(format!("{name} must be >= 0, got {h}")));
        }
    }
    let pick_seed = derive_seed(spec.seed, "mix-pick");
    let r = take_hours(real, spec.real_hours, pick_seed, "real source")?;
    let s = take_hours(synthetic, spec.synthetic_hours, pick_seed, "synthetic source")?;
    let report = MixReport {
        mode: spec.mode,
        real_target_hours: spec.real_hours,
        synthetic_target_hours: spec.synthetic_hours,
        real_hours: to_hours(total_duration(&r)),
        synthetic_hours: to_hours(total_duration(&s)),
        real_utterances: r.len(),
        synthetic_utterances: s.len(),
    };
    let mut out: Vec<Utterance> = r.into_iter().chain(s).collect();
    out.shuffle(&mut rng(derive_seed(spec.seed, "mix-interleave")));
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{test_utt, Origin};

    fn pool(prefix: &str, n: usize, origin: Origin) -> Vec<Utterance> {
        (0..n)
            .map(|i| {
                let mut u = test_utt(&format!("{prefix}{i}"), &format!("{prefix} text {i}"), "s", 60 + (i as u64 % 7) * 20);
                u.origin = origin;
                u
            })
            .collect()
    }

    #[test]
    fn zero_synthetic_is_pure_real() {
        let spec = MixSpec {
            mode: MixMode::Additive,
            real_hours: 1.0,
            synthetic_hours: 0.0,
            seed: 3,
        };
        let (out, rep) = mix(&pool("r", 100, Origin::Real), &pool("s", 100, Origin::Synthetic), &spec).unwrap();
        assert!(out.iter().all(|u| u.origin == Origin::Real));
        assert_eq!(rep.synthetic_utterances, 0);
        assert!(rep.real_hours >= 1.0 && rep.real_hours < 1.0 + 180.0 / 3600.0);
    }

    #[test]
    fn deficit_reported() {
        let spec = MixSpec {
            mode: MixMode::ConstantTotal,
            real_hours: 0.5,
            synthetic_hours: 100.0,
            seed: 0,
        };
        match mix(&pool("r", 100, Origin::Real), &pool("s", 10, Origin::Synthetic), &spec) {
            Err(CorpusError::InsufficientData { deficit_hours, .. }) => assert!(deficit_hours > 99.0),
            other => panic!("{other:?}"),
        }
    }
}
