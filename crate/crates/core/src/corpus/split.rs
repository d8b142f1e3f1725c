use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{to_hours, total_duration, CorpusError, Duration, Utterance};
use crate::seed::rng;
use crate::text::normalize_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftoverPolicy {
    /// Groups that fit nowhere within tolerance go to the split with the
    /// largest target.
    #[default]
    Largest,
    /// Such groups are left out of every split.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Split name → target hours.
    pub targets: BTreeMap<String, f64>,
    #[serde(default = "yes")]
    pub exclusive_speakers: bool,
    #[serde(default = "yes")]
    pub exclusive_transcripts: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub leftover: LeftoverPolicy,
}

fn yes() -> bool {
    true
}

fn default_tolerance() -> f64 {
    0.02
}

impl SplitSpec {
    pub fn new(targets: impl IntoIterator<Item = (String, f64)>, seed: u64) -> Self {
        SplitSpec {
            targets: targets.into_iter().collect(),
            exclusive_speakers: true,
            exclusive_transcripts: true,
            tolerance: default_tolerance(),
            seed,
            leftover: LeftoverPolicy::Largest,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.targets.is_empty() {
            return Err(CorpusError::InvalidInput("no split targets".into()));
        }
        if let Some((name, h)) = self.targets.iter().find(|(_, h)| !(**h > 0.0 && h.is_finite())) {
            return Err(CorpusError::InvalidInput(format!("target for {name} must be positive, got {h}")));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(CorpusError::InvalidInput(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub target_hours: f64,
    pub hours: f64,
    /// `(hours - target) / target`.
    pub deviation: f64,
    pub utterances: usize,
    pub speakers: usize,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub groups: usize,
    pub leftover_groups: usize,
    pub dropped_utterances: usize,
    pub per_split: BTreeMap<String, SplitStats>,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub splits: BTreeMap<String, Vec<Utterance>>,
    pub dropped: Vec<Utterance>,
    pub report: SplitReport,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components under "shares a speaker" and/or "shares a
/// normalized transcript", each as input-ordered member indices.
fn groups(utts: &[Utterance], speakers: bool, transcripts: bool) -> Vec<Vec<usize>> {
    let mut uf = UnionFind((0..utts.len()).collect());
    let mut first_by_speaker: HashMap<&str, usize> = HashMap::new();
    let mut first_by_text: HashMap<String, usize> = HashMap::new();
    for (i, u) in utts.iter().enumerate() {
        if speakers {
            let f = *first_by_speaker.entry(&u.speaker_id).or_insert(i);
            uf.union(f, i);
        }
        if transcripts {
            let f = *first_by_text.entry(normalize_key(&u.transcript)).or_insert(i);
            uf.union(f, i);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..utts.len() {
        let r = uf.find(i);
        by_root.entry(r).or_default().push(i);
    }
    by_root.into_values().collect()
}

fn group_identities(utts: &[Utterance], members: &[usize]) -> (Vec<String>, Vec<String>) {
    let speakers: BTreeSet<String> = members.iter().map(|&i| utts[i].speaker_id.clone()).collect();
    let texts: BTreeSet<String> = members.iter().map(|&i| normalize_key(&utts[i].transcript)).collect();
    (speakers.into_iter().collect(), texts.into_iter().collect())
}

/// Assign whole speaker/transcript groups to splits.
///
/// Groups are visited longest first (ties in seeded random order) and each
/// goes to the split that is least filled relative to its target among those
/// it fits into without exceeding `target · (1 + tolerance)`.
pub fn split(utts: &[Utterance], spec: &SplitSpec) -> Result<SplitOutput, CorpusError> {
    spec.validate()?;
    let total_hours = to_hours(total_duration(utts));
    let target_sum: f64 = spec.targets.values().sum();
    // Small slack so targets written as the exact total are accepted.
    if total_hours < target_sum * (1.0 - 1e-9) {
        return Err(CorpusError::InsufficientData {
            what: "split".into(),
            needed_hours: target_sum,
            available_hours: total_hours,
            deficit_hours: target_sum - total_hours,
        });
    }

    let mut grps: Vec<(Vec<usize>, Duration)> = groups(utts, spec.exclusive_speakers, spec.exclusive_transcripts)
        .into_iter()
        .map(|m| {
            let d = m.iter().map(|&i| utts[i].exact_duration()).sum();
            (m, d)
        })
        .collect();
    let n_groups = grps.len();

    let names: Vec<&String> = spec.targets.keys().collect();
    let targets: Vec<f64> = spec.targets.values().map(|h| h * 3600.0).collect();
    let largest = (0..names.len())
        .max_by(|&a, &b| targets[a].total_cmp(&targets[b]).then(b.cmp(&a)))
        .expect("non-empty targets");
    let cap = |j: usize| targets[j] * (1.0 + spec.tolerance);

    for (m, d) in &grps {
        let secs = super::to_secs(*d);
        if secs > cap(largest) {
            let (speakers, transcripts) = group_identities(utts, m);
            return Err(CorpusError::UnsplittableGroup {
                hours: secs / 3600.0,
                speakers,
                transcripts,
            });
        }
    }

    grps.shuffle(&mut rng(spec.seed));
    grps.sort_by(|a, b| b.1.cmp(&a.1));

    let mut fill = vec![0.0f64; names.len()];
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    let mut leftovers: Vec<Vec<usize>> = Vec::new();
    for (m, d) in grps {
        let secs = super::to_secs(d);
        let best = (0..names.len())
            .filter(|&j| fill[j] + secs <= cap(j))
            .min_by(|&a, &b| (fill[a] / targets[a]).total_cmp(&(fill[b] / targets[b])));
        match best {
            Some(j) => {
                fill[j] += secs;
                assigned[j].extend(m);
            }
            None => leftovers.push(m),
        }
    }
    let leftover_groups = leftovers.len();
    let mut dropped = Vec::new();
    for m in leftovers {
        match spec.leftover {
            LeftoverPolicy::Largest => assigned[largest].extend(m),
            LeftoverPolicy::Drop => dropped.extend(m.into_iter().map(|i| utts[i].clone())),
        }
    }

    let mut splits = BTreeMap::new();
    let mut per_split = BTreeMap::new();
    for (j, mut idx) in assigned.into_iter().enumerate() {
        idx.sort_unstable();
        let members: Vec<Utterance> = idx.into_iter().map(|i| utts[i].clone()).collect();
        let hours = to_hours(total_duration(&members));
        let target_hours = spec.targets[names[j]];
        let deviation = (hours - target_hours) / target_hours;
        per_split.insert(
            names[j].clone(),
            SplitStats {
                target_hours,
                hours,
                deviation,
                utterances: members.len(),
                speakers: members.iter().map(|u| &u.speaker_id).collect::<BTreeSet<_>>().len(),
                within_tolerance: deviation.abs() <= spec.tolerance + 1e-12,
            },
        );
        splits.insert(names[j].clone(), members);
    }
    check_split(&splits, spec.exclusive_speakers, spec.exclusive_transcripts)?;
    let within_tolerance = per_split.values().all(|s| s.within_tolerance);
    if !within_tolerance {
        tracing::warn!("some splits fall outside the duration tolerance");
    }
    Ok(SplitOutput {
        splits,
        report: SplitReport {
            groups: n_groups,
            leftover_groups,
            dropped_utterances: dropped.len(),
            per_split,
            within_tolerance,
        },
        dropped,
    })
}

/// Rescan finished splits for shared speakers or normalized transcripts and
/// for utterances placed twice.
pub fn check_split(
    splits: &BTreeMap<String, Vec<Utterance>>,
    speakers: bool,
    transcripts: bool,
) -> Result<(), CorpusError> {
    let mut speaker_home: HashMap<&str, &str> = HashMap::new();
    let mut text_home: HashMap<String, &str> = HashMap::new();
    let mut seen_ids: HashMap<&str, &str> = HashMap::new();
    for (name, utts) in splits {
        for u in utts {
            if let Some(prev) = seen_ids.insert(&u.id, name) {
                return Err(CorpusError::Verification(format!("utterance {} in {prev} and {name}", u.id)));
            }
            if speakers {
                let home = speaker_home.entry(&u.speaker_id).or_insert(name);
                if home != name {
                    return Err(CorpusError::Verification(format!(
                        "speaker {} in {home} and {name}",
                        u.speaker_id
                    )));
                }
            }
            if transcripts {
                let key = normalize_key(&u.transcript);
                let home = text_home.entry(key.clone()).or_insert(name);
                if home != name {
                    return Err(CorpusError::Verification(format!("transcript {key:?} in {home} and {name}")));
                }
            }
        }
    }
    Ok(())
}
