//! Seeded stream orderings over a feature bank.
//!
//! * `iid`: global shuffle.
//! * `class_iid`: classes in a shuffled order, each class contiguous and
//!   shuffled internally.
//! * `instance`: instances in a shuffled order, frames ascending inside each.
//! * `class_instance`: classes shuffled, instances of a class shuffled, frames
//!   ascending.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureBank;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    Iid,
    ClassIid,
    Instance,
    ClassInstance,
}

impl OrderingKind {
    pub const ALL: [OrderingKind; 4] = [
        OrderingKind::Iid,
        OrderingKind::ClassIid,
        OrderingKind::Instance,
        OrderingKind::ClassInstance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            OrderingKind::Iid => "iid",
            OrderingKind::ClassIid => "class_iid",
            OrderingKind::Instance => "instance",
            OrderingKind::ClassInstance => "class_instance",
        }
    }

    pub fn is_class_ordered(&self) -> bool {
        matches!(self, OrderingKind::ClassIid | OrderingKind::ClassInstance)
    }

    pub fn needs_instances(&self) -> bool {
        matches!(self, OrderingKind::Instance | OrderingKind::ClassInstance)
    }
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OrderingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("ordering", format!("unknown ordering `{s}`")))
    }
}

/// A prefix length or evaluation interval, in samples or in classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Samples(usize),
    Classes(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub kind: OrderingKind,
    pub seed: u64,
    pub base_init_len: usize,
    pub eval_points: Vec<usize>,
    #[serde(skip)]
    pub order: Vec<usize>,
}

fn group_by<K: Ord + Copy>(indices: impl Iterator<Item = usize>, key: impl Fn(usize) -> K) -> BTreeMap<K, Vec<usize>> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for i in indices {
        groups.entry(key(i)).or_default().push(i);
    }
    groups
}

/// Instance groups among `rows`, each sorted by frame index, in shuffled order.
fn shuffled_instances(bank: &FeatureBank, rows: impl Iterator<Item = usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let meta = |i: usize| bank.meta(i).expect("metadata checked");
    let groups = group_by(rows, |i| meta(i).instance_id);
    let mut instances: Vec<Vec<usize>> = groups.into_values().collect();
    for inst in &mut instances {
        inst.sort_by_key(|&i| meta(i).frame_index);
    }
    instances.shuffle(rng);
    instances.concat()
}

/// Prefix length just before the `(m + 1)`-th distinct label first appears.
fn prefix_of_classes(bank: &FeatureBank, order: &[usize], m: usize) -> usize {
    let mut seen = HashSet::new();
    for (pos, &i) in order.iter().enumerate() {
        if seen.insert(bank.label(i)) && seen.len() > m {
            return pos;
        }
    }
    order.len()
}

/// Positions at which each new distinct label first appears (excluding 0).
fn class_starts(bank: &FeatureBank, order: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut starts = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if seen.insert(bank.label(i)) && pos > 0 {
            starts.push(pos);
        }
    }
    starts
}

fn eval_schedule(bank: &FeatureBank, order: &[usize], base: usize, every: Span) -> Result<Vec<usize>> {
    let n = order.len();
    let mut points: Vec<usize> = match every {
        Span::Samples(0) | Span::Classes(0) => {
            return Err(Error::config("eval_every", "interval must be at least 1"))
        }
        Span::Samples(step) => (1..=n / step).map(|j| j * step).collect(),
        Span::Classes(m) => class_starts(bank, order)
            .into_iter()
            .enumerate()
            .filter(|(j, _)| (j + 1) % m == 0)
            .map(|(_, p)| p)
            .collect(),
    };
    points.retain(|&p| p >= base.max(1) && p < n);
    points.push(n);
    Ok(points)
}

pub fn make_plan(bank: &FeatureBank, kind: OrderingKind, seed: u64, base_init: Span, eval_every: Span) -> Result<StreamPlan> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if kind.needs_instances() && !bank.has_full_metadata() {
        return Err(Error::MissingMetadata(kind.as_str()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = 0..bank.len();
    let order: Vec<usize> = match kind {
        OrderingKind::Iid => {
            let mut order: Vec<usize> = all.collect();
            order.shuffle(&mut rng);
            order
        }
        OrderingKind::ClassIid => {
            let mut classes: Vec<Vec<usize>> = group_by(all, |i| bank.label(i)).into_values().collect();
            classes.shuffle(&mut rng);
            for c in &mut classes {
                c.shuffle(&mut rng);
            }
            classes.concat()
        }
        OrderingKind::Instance => shuffled_instances(bank, all, &mut rng),
        OrderingKind::ClassInstance => {
            let mut classes: Vec<Vec<usize>> = group_by(all, |i| bank.label(i)).into_values().collect();
            classes.shuffle(&mut rng);
            classes
                .into_iter()
                .flat_map(|rows| shuffled_instances(bank, rows.into_iter(), &mut rng))
                .collect()
        }
    };
    let n = order.len();
    let base_init_len = match base_init {
        Span::Samples(s) => {
            if s > n {
                return Err(Error::SpecTooLarge {
                    what: "base initialization samples",
                    requested: s,
                    available: n,
                });
            }
            s
        }
        Span::Classes(m) => {
            let classes = bank.class_counts().iter().filter(|&&c| c > 0).count();
            if m > classes {
                return Err(Error::SpecTooLarge {
                    what: "base initialization classes",
                    requested: m,
                    available: classes,
                });
            }
            prefix_of_classes(bank, &order, m)
        }
    };
    let eval_points = eval_schedule(bank, &order, base_init_len, eval_every)?;
    Ok(StreamPlan {
        kind,
        seed,
        base_init_len,
        eval_points,
        order,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanReport {
    pub passed: bool,
    pub first_violation: Option<String>,
}

impl PlanReport {
    fn fail(msg: String) -> Self {
        Self {
            passed: false,
            first_violation: Some(msg),
        }
    }
}

/// Each key value must occupy a single contiguous run of `keys`.
fn first_non_contiguous<K: Eq + std::hash::Hash + Copy>(keys: impl Iterator<Item = K>) -> Option<K> {
    let mut closed = HashSet::new();
    let mut current: Option<K> = None;
    for k in keys {
        if current != Some(k) {
            if let Some(prev) = current {
                closed.insert(prev);
            }
            if closed.contains(&k) {
                return Some(k);
            }
            current = Some(k);
        }
    }
    None
}

/// Checks that need no bank: permutation of `0..n` and the evaluation schedule.
pub fn validate_plan_structure(plan: &StreamPlan) -> PlanReport {
    let n = plan.order.len();
    let mut hit = vec![false; n];
    for &i in &plan.order {
        if i >= n || std::mem::replace(&mut hit[i], true) {
            return PlanReport::fail(format!("not a permutation: index {i} out of range or repeated"));
        }
    }
    if plan.base_init_len > n {
        return PlanReport::fail(format!("base_init_len {} exceeds stream length {n}", plan.base_init_len));
    }
    if plan.eval_points.last() != Some(&n) {
        return PlanReport::fail(format!("last evaluation point must equal stream length {n}"));
    }
    if let Some(w) = plan.eval_points.windows(2).find(|w| w[0] >= w[1]) {
        return PlanReport::fail(format!("evaluation points not strictly increasing at {} -> {}", w[0], w[1]));
    }
    if let Some(&p) = plan.eval_points.iter().find(|&&p| p < plan.base_init_len || p == 0) {
        return PlanReport::fail(format!("evaluation point {p} lies before the base-initialization prefix"));
    }
    PlanReport {
        passed: true,
        first_violation: None,
    }
}

/// Full check of `plan` against `bank`, including the ordering constraints
/// of its kind. Reports the first violation found.
pub fn validate_plan(bank: &FeatureBank, plan: &StreamPlan) -> PlanReport {
    let n = bank.len();
    if plan.order.len() != n {
        return PlanReport::fail(format!(
            "not a permutation: plan has {} entries for a bank of {n}",
            plan.order.len()
        ));
    }
    let structure = validate_plan_structure(plan);
    if !structure.passed {
        return structure;
    }
    if plan.kind.is_class_ordered() {
        if let Some(label) = first_non_contiguous(plan.order.iter().map(|&i| bank.label(i))) {
            return PlanReport::fail(format!("class {label} is not contiguous"));
        }
    }
    if plan.kind.needs_instances() {
        if let Some(i) = plan.order.iter().find(|&&i| bank.meta(i).is_none()) {
            return PlanReport::fail(format!("row {i} has no instance metadata"));
        }
        let meta = |i: usize| bank.meta(i).expect("checked above");
        if let Some(id) = first_non_contiguous(plan.order.iter().map(|&i| meta(i).instance_id)) {
            return PlanReport::fail(format!("instance {id} is interleaved with other instances"));
        }
        let mut last_frame: HashMap<i32, i32> = HashMap::new();
        for &i in &plan.order {
            let m = meta(i);
            if let Some(&prev) = last_frame.get(&m.instance_id) {
                if m.frame_index <= prev {
                    return PlanReport::fail(format!(
                        "instance {}: frame {} follows frame {prev}",
                        m.instance_id, m.frame_index
                    ));
                }
            }
            last_frame.insert(m.instance_id, m.frame_index);
        }
    }
    PlanReport {
        passed: true,
        first_violation: None,
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    kind: OrderingKind,
    seed: u64,
    base_init_len: usize,
    eval_points: Vec<usize>,
    n: usize,
}

const MANIFEST_FORMAT: &str = "stream-plan/1";

impl StreamPlan {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Text manifest: a JSON header line, then one bank index per line.
    pub fn write_manifest(&self, mut w: impl Write) -> Result<()> {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            kind: self.kind,
            seed: self.seed,
            base_init_len: self.base_init_len,
            eval_points: self.eval_points.clone(),
            n: self.order.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for i in &self.order {
            writeln!(w, "{i}")?;
        }
        Ok(())
    }

    pub fn read_manifest(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::BadManifest("empty manifest".into()))??;
        let header: ManifestHeader =
            serde_json::from_str(&first).map_err(|e| Error::BadManifest(format!("header: {e}")))?;
        if header.format != MANIFEST_FORMAT {
            return Err(Error::BadManifest(format!("unknown format `{}`", header.format)));
        }
        let mut order = Vec::with_capacity(header.n);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            order.push(line.parse().map_err(|_| {
                Error::BadManifest(format!("line {}: `{line}` is not an index", lineno + 2))
            })?);
        }
        if order.len() != header.n {
            return Err(Error::BadManifest(format!(
                "header declares {} indices, found {}",
                header.n,
                order.len()
            )));
        }
        Ok(Self {
            kind: header.kind,
            seed: header.seed,
            base_init_len: header.base_init_len,
            eval_points: header.eval_points,
            order,
        })
    }
}
