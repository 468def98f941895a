//! Incremental clustering over a growing anchor set.
//!
//! Each step clusters the stored anchors (carrying their accumulated weights)
//! together with the new unlabeled samples (weight 1 each). Clusters that
//! contain no old anchor are *new*: their centroid-closest sample is proposed
//! as a new anchor. Every cluster's new-sample count is then split equally
//! among the anchors it contains, so the total anchor weight always equals the
//! number of samples that have passed through the clusterer (unless proposals
//! were clipped by the label budget, in which case those samples are dropped).
//!
//! Weights are exact rationals so that the conservation identity holds with
//! no rounding at all.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::kmeans::{sq_dist, KMeans};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::streams::{Oracle, StreamSample};

/// Exact non-negative anchor weight. Serialised as `"p"` or `"p/q"`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorWeight(BigRational);

impl AnchorWeight {
    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn from_count(n: usize) -> Self {
        Self(BigRational::from_integer(BigInt::from(n)))
    }

    /// `numerator / denominator`
    pub fn ratio(numerator: usize, denominator: usize) -> Self {
        Self(BigRational::new(BigInt::from(numerator), BigInt::from(denominator)))
    }

    pub fn add(&mut self, other: &AnchorWeight) {
        self.0 += &other.0;
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn sum<'a>(weights: impl IntoIterator<Item = &'a AnchorWeight>) -> AnchorWeight {
        let mut total = AnchorWeight::zero();
        for w in weights {
            total.add(w);
        }
        total
    }
}

impl fmt::Debug for AnchorWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for AnchorWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for AnchorWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidWeight(format!("cannot parse anchor weight {s:?}"));
        let r = match s.split_once('/') {
            Some((n, d)) => {
                let d: BigInt = d.trim().parse().map_err(|_| bad())?;
                if d.is_zero() {
                    return Err(bad());
                }
                BigRational::new(n.trim().parse().map_err(|_| bad())?, d)
            }
            None => BigRational::from_integer(s.trim().parse().map_err(|_| bad())?),
        };
        if r < BigRational::zero() {
            return Err(bad());
        }
        Ok(Self(r))
    }
}

impl Serialize for AnchorWeight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for AnchorWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Raw input features of the stored sample.
    pub features: Vec<f64>,
    pub label: usize,
    pub weight: AnchorWeight,
    pub created_at: usize,
    /// Stream index of the sample this anchor was taken from.
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_anchors(anchors: Vec<Anchor>) -> Self {
        Self { anchors }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn total_weight(&self) -> AnchorWeight {
        AnchorWeight::sum(self.anchors.iter().map(|a| &a.weight))
    }

    pub fn labeled_samples(&self) -> Vec<crate::model::LabeledSample> {
        self.anchors.iter().map(|a| crate::model::LabeledSample::new(a.features.clone(), a.label)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A new cluster's candidate anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorProposal {
    pub cluster: usize,
    /// Position of the proposed sample in `u_new`.
    pub sample: usize,
    /// Number of new samples in the cluster.
    pub cluster_size: usize,
}

/// Clustering outcome for one step, before any labels are requested.
#[derive(Debug, Clone, PartialEq)]
pub struct IcPlan {
    pub proposals: Vec<AnchorProposal>,
    /// New-sample count per cluster.
    pub new_counts: Vec<usize>,
    /// Indices (into the anchor set) of the old anchors in each cluster.
    pub old_members: Vec<Vec<usize>>,
    pub inertia: f64,
}

impl IcPlan {
    fn empty() -> Self {
        Self { proposals: Vec::new(), new_counts: Vec::new(), old_members: Vec::new(), inertia: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for IcConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-9, restarts: 3 }
    }
}

/// Outcome of committing a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IcOutcome {
    pub new_anchors: usize,
    /// New samples whose cluster was clipped by the budget and therefore
    /// contributes to no anchor.
    pub dropped_samples: usize,
}

/// Clusters `anchors ∪ u_new` in the space given by `features` and proposes one
/// anchor per cluster that contains no old anchor.
pub fn ic_plan<F>(
    anchors: &AnchorSet,
    u_new: &[StreamSample],
    nc: usize,
    features: F,
    cfg: &IcConfig,
    rng: &mut Rng,
) -> Result<IcPlan>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if u_new.is_empty() {
        return Ok(IcPlan::empty());
    }
    if nc == 0 {
        return Err(Error::config("cluster count must be at least 1"));
    }
    let n_old = anchors.len();
    let mut points = Vec::with_capacity(n_old + u_new.len());
    let mut weights = Vec::with_capacity(n_old + u_new.len());
    for a in anchors.anchors() {
        points.push(features(&a.features)?);
        weights.push(a.weight.to_f64());
    }
    for s in u_new {
        points.push(features(&s.features)?);
        weights.push(1.0);
    }
    let k = nc.min(points.len());
    let res = KMeans::new(k).max_iter(cfg.max_iter).tol(cfg.tol).restarts(cfg.restarts).fit(&points, &weights, rng)?;

    let mut new_counts = vec![0usize; k];
    let mut old_members = vec![Vec::new(); k];
    let mut closest: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, &c) in res.assignments.iter().enumerate() {
        if i < n_old {
            old_members[c].push(i);
        } else {
            new_counts[c] += 1;
            let d = sq_dist(&points[i], &res.centroids[c]);
            // Strict comparison keeps the lowest index on ties.
            if closest[c].is_none_or(|(_, best)| d < best) {
                closest[c] = Some((i - n_old, d));
            }
        }
    }
    let proposals = (0..k)
        .filter(|&c| old_members[c].is_empty() && new_counts[c] > 0)
        .map(|c| AnchorProposal { cluster: c, sample: closest[c].expect("non-empty").0, cluster_size: new_counts[c] })
        .collect();
    Ok(IcPlan { proposals, new_counts, old_members, inertia: res.inertia })
}

/// Keeps at most `budget_remaining` proposals, largest clusters first
/// (ties keep the original order).
pub fn anchor_budget_guard(proposed: &[AnchorProposal], budget_remaining: usize) -> Vec<AnchorProposal> {
    let mut sorted = proposed.to_vec();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.cluster_size));
    sorted.truncate(budget_remaining);
    sorted
}

/// Labels the accepted proposals through the oracle, appends them as anchors
/// and distributes each cluster's new-sample count over its anchors.
pub fn ic_commit<O: Oracle + ?Sized>(
    anchors: &mut AnchorSet,
    plan: &IcPlan,
    accepted: &[AnchorProposal],
    u_new: &[StreamSample],
    oracle: &mut O,
    step: usize,
) -> Result<IcOutcome> {
    let mut outcome = IcOutcome::default();
    if plan.new_counts.is_empty() {
        return Ok(outcome);
    }
    let mut labeled = Vec::with_capacity(accepted.len());
    for p in accepted {
        let sample = &u_new[p.sample];
        let label = oracle.label(sample.index)?;
        labeled.push((p.cluster, sample, label));
    }
    let accepted_clusters: Vec<usize> = accepted.iter().map(|p| p.cluster).collect();
    for (cluster, &count) in plan.new_counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let olds = &plan.old_members[cluster];
        if !olds.is_empty() {
            let share = AnchorWeight::ratio(count, olds.len());
            for &i in olds {
                anchors.anchors[i].weight.add(&share);
            }
        } else if !accepted_clusters.contains(&cluster) {
            outcome.dropped_samples += count;
        }
    }
    for (cluster, sample, label) in labeled {
        anchors.anchors.push(Anchor {
            features: sample.features.clone(),
            label,
            weight: AnchorWeight::from_count(plan.new_counts[cluster]),
            created_at: step,
            index: sample.index,
        });
        outcome.new_anchors += 1;
    }
    Ok(outcome)
}

/// One unclipped incremental-clustering step: plan, label every proposal,
/// update weights. Returns the number of new anchors.
pub fn ic_step<F, O>(
    anchors: &mut AnchorSet,
    u_new: &[StreamSample],
    nc: usize,
    features: F,
    oracle: &mut O,
    cfg: &IcConfig,
    rng: &mut Rng,
    step: usize,
) -> Result<usize>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    O: Oracle + ?Sized,
{
    let plan = ic_plan(anchors, u_new, nc, features, cfg, rng)?;
    let accepted = plan.proposals.clone();
    Ok(ic_commit(anchors, &plan, &accepted, u_new, oracle, step)?.new_anchors)
}
