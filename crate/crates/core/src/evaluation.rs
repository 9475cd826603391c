//! Hard assignments from fuzzy partitions, Rand index and the simulation
//! scoring protocol.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignRule {
    /// Assign the argmax cluster only if its membership exceeds the threshold.
    Threshold,
    /// Always assign the argmax cluster.
    MaxMembership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Cluster(usize),
    Fuzzy,
}

impl Assignment {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Assignment::Cluster(c) => Some(c),
            Assignment::Fuzzy => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentReport {
    pub rule: AssignRule,
    pub threshold: f64,
    pub assignments: Vec<Assignment>,
    pub fuzzy_fraction: f64,
}

/// Index and value of the largest entry; ties go to the lower index.
fn argmax(row: &[f64]) -> (usize, f64) {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
}

/// A maximum membership equal to the threshold counts as fuzzy.
pub fn assign(memberships: &[Vec<f64>], rule: AssignRule, threshold: f64) -> Result<AssignmentReport> {
    let c = memberships.first().map_or(0, Vec::len);
    if c < 2 {
        return Err(Error::invalid("memberships need at least 2 clusters"));
    }
    if rule == AssignRule::Threshold && !(threshold > 1.0 / c as f64 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} must lie in (1/{c}, 1)")));
    }
    let assignments: Vec<Assignment> = memberships
        .iter()
        .map(|row| {
            let (i, v) = argmax(row);
            match rule {
                AssignRule::Threshold if v <= threshold => Assignment::Fuzzy,
                _ => Assignment::Cluster(i),
            }
        })
        .collect();
    let fuzzy = assignments.iter().filter(|a| **a == Assignment::Fuzzy).count();
    Ok(AssignmentReport {
        rule,
        threshold,
        fuzzy_fraction: fuzzy as f64 / assignments.len().max(1) as f64,
        assignments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCounts {
    pub same_same: u64,
    pub diff_diff: u64,
    pub disagree: u64,
}

impl PairCounts {
    pub fn rand_index(&self) -> f64 {
        let total = self.same_same + self.diff_diff + self.disagree;
        (self.same_same + self.diff_diff) as f64 / total as f64
    }
}

/// Pair agreement counts between two labelings, from their contingency table.
pub fn pair_counts<A: Eq + Ord + Clone, B: Eq + Ord + Clone>(pred: &[A], truth: &[B]) -> Result<PairCounts> {
    use std::collections::BTreeMap;
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!("label lengths differ: {} vs {}", pred.len(), truth.len())));
    }
    if pred.len() < 2 {
        return Err(Error::invalid("the Rand index needs at least 2 objects"));
    }
    let choose2 = |n: u64| n * n.saturating_sub(1) / 2;
    let mut joint: BTreeMap<(A, B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<B, u64> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        *joint.entry((p.clone(), t.clone())).or_default() += 1;
        *rows.entry(p.clone()).or_default() += 1;
        *cols.entry(t.clone()).or_default() += 1;
    }
    let n = pred.len() as u64;
    let both: u64 = joint.values().map(|&v| choose2(v)).sum();
    let same_pred: u64 = rows.values().map(|&v| choose2(v)).sum();
    let same_truth: u64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n);
    let diff_diff = total + both - same_pred - same_truth;
    Ok(PairCounts {
        same_same: both,
        diff_diff,
        disagree: total - both - diff_diff,
    })
}

pub fn rand_index<A: Eq + Ord + Clone, B: Eq + Ord + Clone>(pred: &[A], truth: &[B]) -> Result<f64> {
    Ok(pair_counts(pred, truth)?.rand_index())
}

/// Ground truth of a simulated block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Pure0,
    Pure1,
    Switching,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockOutcome {
    pub truth: TruthKind,
    pub assignment: Assignment,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationScore {
    pub threshold: f64,
    pub accuracy: f64,
    /// Rand index over pure blocks, with fuzzy-flagged ones assigned by
    /// maximum membership.
    pub rand_index_pure: f64,
    /// Rand index over all blocks with FUZZY as a third label on both sides.
    pub rand_index_three_way: f64,
    pub pair_counts_pure: PairCounts,
    /// Fraction of switching blocks flagged FUZZY.
    pub switching_flag_rate: f64,
    pub fuzzy_fraction: f64,
    /// Whether cluster 0 was matched to `Pure1`.
    pub swapped: bool,
    pub per_block: Vec<BlockOutcome>,
}

/// Score a two-cluster partition against simulation truth.
///
/// Pure blocks are correct when the threshold rule assigns them to their
/// cluster under the better of the two label matchings; switching blocks are
/// correct when flagged FUZZY.
pub fn simulation_accuracy(memberships: &[Vec<f64>], truth: &[TruthKind], threshold: f64) -> Result<SimulationScore> {
    if memberships.len() != truth.len() {
        return Err(Error::invalid("membership rows do not match the truth labels"));
    }
    if memberships.iter().any(|r| r.len() != 2) {
        return Err(Error::invalid("simulation scoring requires exactly C = 2"));
    }
    let rep = assign(memberships, AssignRule::Threshold, threshold)?;
    let expected = |t: TruthKind, swapped: bool| match (t, swapped) {
        (TruthKind::Pure0, false) | (TruthKind::Pure1, true) => Assignment::Cluster(0),
        (TruthKind::Pure1, false) | (TruthKind::Pure0, true) => Assignment::Cluster(1),
        (TruthKind::Switching, _) => Assignment::Fuzzy,
    };
    let hits = |swapped: bool| {
        rep.assignments
            .iter()
            .zip(truth)
            .filter(|(a, t)| **a == expected(**t, swapped))
            .count()
    };
    let swapped = hits(true) > hits(false);
    let per_block: Vec<BlockOutcome> = rep
        .assignments
        .iter()
        .zip(truth)
        .map(|(&a, &t)| BlockOutcome {
            truth: t,
            assignment: a,
            correct: a == expected(t, swapped),
        })
        .collect();
    let n_correct = per_block.iter().filter(|o| o.correct).count();

    let pure: Vec<usize> = (0..truth.len()).filter(|&b| truth[b] != TruthKind::Switching).collect();
    let pair_counts_pure = if pure.len() >= 2 {
        let pred: Vec<usize> = pure.iter().map(|&b| argmax(&memberships[b]).0).collect();
        let t: Vec<TruthKind> = pure.iter().map(|&b| truth[b]).collect();
        pair_counts(&pred, &t)?
    } else {
        PairCounts {
            same_same: 0,
            diff_diff: 0,
            disagree: 0,
        }
    };
    let rand_index_pure = if pure.len() >= 2 { pair_counts_pure.rand_index() } else { f64::NAN };
    let rand_index_three_way = if truth.len() >= 2 {
        let pred: Vec<Option<usize>> = rep.assignments.iter().map(|a| a.cluster()).collect();
        rand_index(&pred, truth)?
    } else {
        f64::NAN
    };
    let switching = truth.iter().filter(|t| **t == TruthKind::Switching).count();
    let flagged = per_block
        .iter()
        .filter(|o| o.truth == TruthKind::Switching && o.assignment == Assignment::Fuzzy)
        .count();
    Ok(SimulationScore {
        threshold,
        accuracy: n_correct as f64 / truth.len().max(1) as f64,
        rand_index_pure,
        rand_index_three_way,
        pair_counts_pure,
        switching_flag_rate: if switching > 0 { flagged as f64 / switching as f64 } else { f64::NAN },
        fuzzy_fraction: rep.fuzzy_fraction,
        swapped,
        per_block,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block_id: usize,
    pub assignment: Assignment,
    pub max_membership: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// Evaluation report written next to the clustering outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub rule: AssignRule,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub rand_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand_index_three_way: Option<f64>,
    pub fuzzy_fraction: f64,
    pub per_block: Vec<BlockRecord>,
}

/// Build an evaluation report. With simulation truth and `C = 2` the
/// threshold protocol is scored; with string labels the Rand index of the
/// max-membership assignment is reported. The fuzzy fraction always uses
/// the threshold rule.
pub fn evaluate(
    memberships: &[Vec<f64>],
    block_ids: &[usize],
    rule: AssignRule,
    threshold: f64,
    sim_truth: Option<&[TruthKind]>,
    labels: Option<&[String]>,
) -> Result<EvaluationReport> {
    if block_ids.len() != memberships.len() {
        return Err(Error::invalid("block id count does not match the memberships"));
    }
    let rep = assign(memberships, rule, threshold)?;
    let fuzzy_fraction = match rule {
        AssignRule::Threshold => rep.fuzzy_fraction,
        AssignRule::MaxMembership => assign(memberships, AssignRule::Threshold, threshold)?.fuzzy_fraction,
    };
    let mut per_block: Vec<BlockRecord> = memberships
        .iter()
        .zip(block_ids)
        .zip(&rep.assignments)
        .map(|((row, &id), &a)| BlockRecord {
            block_id: id,
            assignment: a,
            max_membership: argmax(row).1,
            truth: None,
            correct: None,
        })
        .collect();
    let mut out = EvaluationReport {
        rule,
        threshold,
        accuracy: None,
        rand_index: None,
        rand_index_three_way: None,
        fuzzy_fraction,
        per_block: Vec::new(),
    };
    if let Some(truth) = sim_truth {
        let truth: Vec<TruthKind> = block_ids.iter().map(|&b| truth[b]).collect();
        if memberships.first().is_some_and(|r| r.len() == 2) {
            let score = simulation_accuracy(memberships, &truth, threshold)?;
            out.accuracy = Some(score.accuracy);
            out.rand_index = Some(score.rand_index_pure).filter(|v| v.is_finite());
            out.rand_index_three_way = Some(score.rand_index_three_way).filter(|v| v.is_finite());
            for (rec, o) in per_block.iter_mut().zip(&score.per_block) {
                rec.correct = Some(o.correct);
            }
        }
        for (rec, t) in per_block.iter_mut().zip(&truth) {
            rec.truth = Some(serde_json::to_value(t)?.as_str().unwrap_or_default().to_string());
        }
    } else if let Some(labels) = labels {
        let truth: Vec<&String> = block_ids.iter().map(|&b| &labels[b]).collect();
        let pred: Vec<usize> = memberships.iter().map(|r| argmax(r).0).collect();
        if pred.len() >= 2 {
            out.rand_index = Some(rand_index(&pred, &truth)?);
        }
        for (rec, t) in per_block.iter_mut().zip(truth) {
            rec.truth = Some(t.clone());
        }
    }
    out.per_block = per_block;
    Ok(out)
}

pub fn write_evaluation_json<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let r = assign(&[vec![0.95, 0.05], vec![0.6, 0.4], vec![0.7, 0.3]], AssignRule::Threshold, 0.7).unwrap();
        assert_eq!(r.assignments, vec![Assignment::Cluster(0), Assignment::Fuzzy, Assignment::Fuzzy]);
        assert!((r.fuzzy_fraction - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn max_membership_tie_goes_to_lower_index() {
        let r = assign(&[vec![0.5, 0.5]], AssignRule::MaxMembership, 0.7).unwrap();
        assert_eq!(r.assignments, vec![Assignment::Cluster(0)]);
    }

    #[test]
    fn threshold_out_of_range() {
        assert!(assign(&[vec![0.5, 0.5]], AssignRule::Threshold, 0.5).is_err());
        assert!(assign(&[vec![0.5, 0.5]], AssignRule::Threshold, 1.0).is_err());
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&[1, 1, 2, 2], &[1, 1, 2, 2]).unwrap(), 1.0);
        assert!((rand_index(&[1, 2, 1, 2], &[1, 1, 2, 2]).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(rand_index(&[2, 1], &[1, 2]).unwrap(), 1.0);
        assert!(rand_index(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn simulation_protocol() {
        use TruthKind::*;
        let e = vec![vec![0.1, 0.9], vec![0.95, 0.05], vec![0.5, 0.5], vec![0.9, 0.1]];
        let truth = [Pure0, Pure1, Switching, Switching];
        let s = simulation_accuracy(&e, &truth, 0.7).unwrap();
        assert!(s.swapped);
        assert_eq!(s.accuracy, 0.75);
        assert_eq!(s.switching_flag_rate, 0.5);
        assert!(!s.per_block[3].correct);
        assert_eq!(s.rand_index_pure, 1.0);
        assert!(simulation_accuracy(&[vec![0.3, 0.3, 0.4]], &[Pure0], 0.7).is_err());
    }
}
