//! Enumerable structured-output families.
//!
//! Three families are supported: rooted directed spanning trees
//! (arborescences) over `v` labeled nodes, DAGs over `v` nodes with bounded
//! in-degree, and fixed-size subsets of a finite universe.
//!
//! # Coordinates
//!
//! *Components* are the atoms a structure is made of and what the Hamming
//! distance counts:
//!
//! - subsets: element `e` in `0..universe`;
//! - trees and DAGs: the directed edge `s -> t` (`s != t`), with index
//!   `s * (v - 1) + (t if t < s else t - 1)`.
//!
//! *Feature pairs* index the joint feature map and the input bits:
//!
//! - subsets: unordered element pairs `i < j`, index
//!   `i * (2u - i - 1) / 2 + (j - i - 1)`;
//! - trees: unordered node pairs `{s, t}` with the same triangular index, so
//!   an edge activates its pair regardless of direction;
//! - DAGs: ordered node pairs, i.e. the directed edge index itself.
//!
//! The feature vector has `φ(x, y)[p] = 1` iff input bit `p` is set and `y`
//! contains pair `p` (both elements for subsets, an edge joining the two
//! nodes for graphs). The feasible set does not depend on `x`; `x` only
//! enters through the feature map.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of structures an [`OutputSpace`] may hold.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 200_000;

/// Components are stored as bits of a `u64`.
const MAX_COMPONENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StructureFamily {
    SpanningTree { nodes: usize },
    Dag { nodes: usize, max_parents: usize },
    Subset { k: usize, universe: usize },
}

impl StructureFamily {
    pub fn spanning_tree(nodes: usize) -> Result<Self> {
        Self::SpanningTree { nodes }.validated()
    }

    pub fn dag(nodes: usize, max_parents: usize) -> Result<Self> {
        Self::Dag { nodes, max_parents }.validated()
    }

    pub fn subset(k: usize, universe: usize) -> Result<Self> {
        Self::Subset { k, universe }.validated()
    }

    fn validated(self) -> Result<Self> {
        match self {
            Self::SpanningTree { nodes } | Self::Dag { nodes, .. } => {
                if nodes < 2 {
                    return Err(Error::InvalidFamily(format!("{self}: need at least 2 nodes")));
                }
            }
            Self::Subset { k, universe } => {
                if universe == 0 || k == 0 || k > universe {
                    return Err(Error::InvalidFamily(format!("{self}: need 1 <= k <= universe")));
                }
            }
        }
        if self.component_count() > MAX_COMPONENTS {
            return Err(Error::InvalidFamily(format!(
                "{self}: {} components exceed the supported maximum of {MAX_COMPONENTS}",
                self.component_count()
            )));
        }
        Ok(self)
    }

    /// Dimension `d` of the joint feature map (and length of inputs).
    pub fn feature_dim(&self) -> usize {
        match *self {
            Self::SpanningTree { nodes } => nodes * (nodes - 1) / 2,
            Self::Dag { nodes, .. } => nodes * (nodes - 1),
            Self::Subset { universe, .. } => universe * (universe - 1) / 2,
        }
    }

    /// Length of a [`StructuredInput`] bit vector for this family.
    pub fn input_len(&self) -> usize {
        self.feature_dim()
    }

    pub fn component_count(&self) -> usize {
        match *self {
            Self::SpanningTree { nodes } | Self::Dag { nodes, .. } => nodes * (nodes - 1),
            Self::Subset { universe, .. } => universe,
        }
    }

    /// Number of components every structure has, when that is fixed.
    pub fn fixed_size(&self) -> Option<usize> {
        match *self {
            Self::SpanningTree { nodes } => Some(nodes - 1),
            Self::Dag { .. } => None,
            Self::Subset { k, .. } => Some(k),
        }
    }

    /// Largest symmetric difference between two valid structures.
    ///
    /// For DAGs the bound `2 * max_edges` is attained by a maximal DAG along
    /// one topological order and its mirror along the reversed order, whose
    /// edge sets are disjoint.
    pub fn hamming_normalizer(&self) -> usize {
        match *self {
            Self::SpanningTree { nodes } => 2 * (nodes - 1),
            Self::Dag { nodes, max_parents } => {
                2 * (0..nodes).map(|j| j.min(max_parents)).sum::<usize>()
            }
            Self::Subset { k, universe } => 2 * k.min(universe - k),
        }
    }

    /// Exact size of `Y(x)` when a closed form is known.
    pub fn known_size(&self) -> Option<u128> {
        match *self {
            // Cayley: v^(v-1) rooted labeled trees.
            Self::SpanningTree { nodes } => Some((nodes as u128).pow(nodes as u32 - 1)),
            Self::Dag { .. } => None,
            Self::Subset { k, universe } => Some(binomial(universe, k)),
        }
    }

    /// Nodes of a graph family (`None` for subsets).
    pub fn nodes(&self) -> Option<usize> {
        match *self {
            Self::SpanningTree { nodes } | Self::Dag { nodes, .. } => Some(nodes),
            Self::Subset { .. } => None,
        }
    }

    /// Directed edge index of `source -> target`.
    pub fn edge_index(&self, source: usize, target: usize) -> Option<u16> {
        let v = self.nodes()?;
        if source >= v || target >= v || source == target {
            return None;
        }
        let t = if target < source { target } else { target - 1 };
        Some((source * (v - 1) + t) as u16)
    }

    /// Inverse of [`edge_index`](Self::edge_index).
    pub fn edge_endpoints(&self, edge: u16) -> Option<(usize, usize)> {
        let v = self.nodes()?;
        let e = edge as usize;
        if e >= v * (v - 1) {
            return None;
        }
        let source = e / (v - 1);
        let r = e % (v - 1);
        let target = if r < source { r } else { r + 1 };
        Some((source, target))
    }

    /// Feature-pair indices switched on (when the input bit is set) by a
    /// structure with these components.
    pub fn feature_pairs(&self, components: &[u16]) -> Vec<u16> {
        let mut pairs = match *self {
            Self::Subset { universe, .. } => {
                let mut out = Vec::with_capacity(components.len() * components.len() / 2);
                for (a, &i) in components.iter().enumerate() {
                    for &j in &components[a + 1..] {
                        out.push(triangular_index(i as usize, j as usize, universe) as u16);
                    }
                }
                out
            }
            Self::SpanningTree { nodes } => components
                .iter()
                .map(|&e| {
                    let (s, t) = self.edge_endpoints(e).expect("edge in range");
                    triangular_index(s.min(t), s.max(t), nodes) as u16
                })
                .collect(),
            Self::Dag { .. } => components.to_vec(),
        };
        pairs.sort_unstable();
        pairs
    }

    /// Structural validity of a strictly sorted component list.
    pub fn is_valid(&self, components: &[u16]) -> bool {
        if components.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        if components.iter().any(|&c| c as usize >= self.component_count()) {
            return false;
        }
        match *self {
            Self::Subset { k, .. } => components.len() == k,
            Self::SpanningTree { nodes } => {
                if components.len() != nodes - 1 {
                    return false;
                }
                match self.parent_array(components) {
                    Some(parents) => is_arborescence(&parents),
                    None => false,
                }
            }
            Self::Dag { nodes, max_parents } => {
                let mut indegree = vec![0usize; nodes];
                let mut children = vec![Vec::new(); nodes];
                for &e in components {
                    let (s, t) = self.edge_endpoints(e).expect("edge in range");
                    indegree[t] += 1;
                    children[s].push(t);
                }
                indegree.iter().all(|&d| d <= max_parents) && is_acyclic(&children, indegree)
            }
        }
    }

    /// For trees: `parents[t] = Some(s)` for each edge `s -> t`; `None` if
    /// some node has two parents.
    fn parent_array(&self, components: &[u16]) -> Option<Vec<Option<usize>>> {
        let v = self.nodes()?;
        let mut parents = vec![None; v];
        for &e in components {
            let (s, t) = self.edge_endpoints(e)?;
            if parents[t].replace(s).is_some() {
                return None;
            }
        }
        Some(parents)
    }

    fn enumerate_components(&self, budget: usize) -> Result<Vec<Vec<u16>>> {
        if let Some(size) = self.known_size() {
            if size > budget as u128 {
                return Err(Error::EnumerationBudget { budget });
            }
        }
        let mut out = Vec::new();
        match *self {
            Self::Subset { k, universe } => {
                let mut combo: Vec<usize> = (0..k).collect();
                loop {
                    out.push(combo.iter().map(|&c| c as u16).collect());
                    // advance to the next combination in lexicographic order
                    let mut i = k;
                    while i > 0 && combo[i - 1] == universe - k + i - 1 {
                        i -= 1;
                    }
                    if i == 0 {
                        break;
                    }
                    combo[i - 1] += 1;
                    for j in i..k {
                        combo[j] = combo[j - 1] + 1;
                    }
                }
            }
            Self::SpanningTree { nodes } => {
                for root in 0..nodes {
                    let others: Vec<usize> = (0..nodes).filter(|&n| n != root).collect();
                    // parent choice for each non-root node, as an odometer
                    let mut digits = vec![0usize; others.len()];
                    loop {
                        let mut parents = vec![None; nodes];
                        let mut self_loop = false;
                        for (slot, &child) in others.iter().enumerate() {
                            let p = if digits[slot] >= child { digits[slot] + 1 } else { digits[slot] };
                            self_loop |= p == child;
                            parents[child] = Some(p);
                        }
                        if !self_loop && is_arborescence(&parents) {
                            let mut comps: Vec<u16> = others
                                .iter()
                                .map(|&c| self.edge_index(parents[c].unwrap(), c).unwrap())
                                .collect();
                            comps.sort_unstable();
                            out.push(comps);
                        }
                        if !odometer_step(&mut digits, nodes - 1) {
                            break;
                        }
                    }
                }
            }
            Self::Dag { nodes, max_parents } => {
                let options: Vec<Vec<Vec<usize>>> = (0..nodes)
                    .map(|t| {
                        let candidates: Vec<usize> = (0..nodes).filter(|&s| s != t).collect();
                        let mut sets = Vec::new();
                        for size in 0..=max_parents.min(candidates.len()) {
                            for_each_combination(&candidates, size, &mut |c| sets.push(c.to_vec()));
                        }
                        sets
                    })
                    .collect();
                let mut digits = vec![0usize; nodes];
                loop {
                    let mut indegree = vec![0usize; nodes];
                    let mut children = vec![Vec::new(); nodes];
                    for (t, &d) in digits.iter().enumerate() {
                        for &s in &options[t][d] {
                            indegree[t] += 1;
                            children[s].push(t);
                        }
                    }
                    if is_acyclic(&children, indegree) {
                        if out.len() == budget {
                            return Err(Error::EnumerationBudget { budget });
                        }
                        let mut comps: Vec<u16> = digits
                            .iter()
                            .enumerate()
                            .flat_map(|(t, &d)| {
                                options[t][d].iter().map(move |&s| (s, t))
                            })
                            .map(|(s, t)| self.edge_index(s, t).unwrap())
                            .collect();
                        comps.sort_unstable();
                        out.push(comps);
                    }
                    if !odometer_step_mixed(&mut digits, &options) {
                        break;
                    }
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for StructureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::SpanningTree { nodes } => write!(f, "tree:{nodes}"),
            Self::Dag { nodes, max_parents } => write!(f, "dag:{nodes}:{max_parents}"),
            Self::Subset { k, universe } => write!(f, "set:{k}:{universe}"),
        }
    }
}

impl FromStr for StructureFamily {
    type Err = Error;

    /// Accepts `tree:V`, `dag:V:P`, `set:K:U`, or the bare names `tree`,
    /// `dag`, `set` for the default experiment sizes.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("family '{s}': missing field {i}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("family '{s}': bad number")))
        };
        match (parts[0], parts.len()) {
            ("tree", 1) => Self::spanning_tree(6),
            ("tree", 2) => Self::spanning_tree(num(1)?),
            ("dag", 1) => Self::dag(5, 2),
            ("dag", 3) => Self::dag(num(1)?, num(2)?),
            ("set" | "subset", 1) => Self::subset(4, 15),
            ("set" | "subset", 3) => Self::subset(num(1)?, num(2)?),
            _ => Err(Error::Parse(format!("unrecognized family '{s}'"))),
        }
    }
}

impl TryFrom<String> for StructureFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StructureFamily> for String {
    fn from(f: StructureFamily) -> String {
        f.to_string()
    }
}

/// Observed input: one bit per feature pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StructuredInput {
    bits: Vec<bool>,
}

impl StructuredInput {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn check_len(&self, family: &StructureFamily) -> Result<()> {
        if self.bits.len() != family.input_len() {
            return Err(Error::DimensionMismatch { expected: family.input_len(), actual: self.bits.len() });
        }
        Ok(())
    }

    /// `x ∘ w`: the per-pair weights that survive the input mask. A
    /// structure's score is the sum of these over its feature pairs.
    pub fn masked_weights(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.bits.len() {
            return Err(Error::DimensionMismatch { expected: self.bits.len(), actual: w.len() });
        }
        Ok(self.bits.iter().zip(w).map(|(&b, &wj)| if b { wj } else { 0.0 }).collect())
    }
}

impl fmt::Display for StructuredInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for StructuredInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("bit string contains '{c}'"))),
            })
            .collect::<Result<Vec<bool>>>()
            .map(Self::new)
    }
}

impl TryFrom<String> for StructuredInput {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StructuredInput> for String {
    fn from(x: StructuredInput) -> String {
        x.to_string()
    }
}

/// A structure as a strictly sorted list of component indices.
///
/// The derived ordering (lexicographic on the component list) is the
/// canonical key used for enumeration order and tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct StructuredOutput {
    components: Vec<u16>,
}

impl StructuredOutput {
    /// Sorts the components; duplicates are rejected.
    pub fn from_components(mut components: Vec<u16>) -> Result<Self> {
        components.sort_unstable();
        if components.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidStructure(format!("{components:?} has duplicate components")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[u16] {
        &self.components
    }

    pub fn canonical_key(&self) -> &[u16] {
        &self.components
    }

    pub fn mask(&self) -> u64 {
        self.components.iter().fold(0u64, |m, &c| m | (1u64 << c))
    }

    pub fn contains(&self, component: u16) -> bool {
        self.components.binary_search(&component).is_ok()
    }
}

impl TryFrom<Vec<u16>> for StructuredOutput {
    type Error = Error;
    fn try_from(c: Vec<u16>) -> Result<Self> {
        if c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStructure(format!("{c:?} is not strictly sorted")));
        }
        Ok(Self { components: c })
    }
}

impl From<StructuredOutput> for Vec<u16> {
    fn from(y: StructuredOutput) -> Vec<u16> {
        y.components
    }
}

impl fmt::Display for StructuredOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.components)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Pluggable joint feature map `φ(x, y)`.
pub trait JointFeatureMap {
    fn dim(&self) -> usize;
    fn features(&self, x: &StructuredInput, y: &StructuredOutput) -> Result<FeatureVector>;
}

/// The pair-indicator map `φ(x, y)[p] = 1{x_p = 1 and y contains pair p}`.
impl JointFeatureMap for StructureFamily {
    fn dim(&self) -> usize {
        self.feature_dim()
    }

    fn features(&self, x: &StructuredInput, y: &StructuredOutput) -> Result<FeatureVector> {
        x.check_len(self)?;
        if !self.is_valid(y.components()) {
            return Err(Error::InvalidStructure(y.to_string()));
        }
        let mut phi = FeatureVector::zeros(self.feature_dim());
        for p in self.feature_pairs(y.components()) {
            if x.bits()[p as usize] {
                phi.0[p as usize] = 1.0;
            }
        }
        Ok(phi)
    }
}

/// Materialized `Y(x)` for a family, sorted by canonical key, with the
/// per-structure feature pairs and a mask index for O(1) lookup.
#[derive(Debug, Clone)]
pub struct OutputSpace {
    family: StructureFamily,
    outputs: Vec<StructuredOutput>,
    masks: Vec<u64>,
    pair_offsets: Vec<u32>,
    pairs: Vec<u16>,
    index: HashMap<u64, u32>,
}

impl OutputSpace {
    pub fn enumerate(family: StructureFamily) -> Result<Self> {
        Self::with_budget(family, DEFAULT_ENUMERATION_BUDGET)
    }

    pub fn with_budget(family: StructureFamily, budget: usize) -> Result<Self> {
        let family = family.validated()?;
        let comps = family.enumerate_components(budget)?;
        if comps.len() > budget {
            return Err(Error::EnumerationBudget { budget });
        }
        let mut outputs = Vec::with_capacity(comps.len());
        let mut masks = Vec::with_capacity(comps.len());
        let mut pair_offsets = Vec::with_capacity(comps.len() + 1);
        let mut pairs = Vec::new();
        let mut index = HashMap::with_capacity(comps.len());
        pair_offsets.push(0);
        for (i, c) in comps.into_iter().enumerate() {
            let y = StructuredOutput { components: c };
            pairs.extend(family.feature_pairs(y.components()));
            pair_offsets.push(pairs.len() as u32);
            masks.push(y.mask());
            index.insert(y.mask(), i as u32);
            outputs.push(y);
        }
        Ok(Self { family, outputs, masks, pair_offsets, pairs, index })
    }

    pub fn family(&self) -> &StructureFamily {
        &self.family
    }

    /// `r = |Y(x)|`.
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[StructuredOutput] {
        &self.outputs
    }

    pub fn output(&self, i: usize) -> &StructuredOutput {
        &self.outputs[i]
    }

    pub fn index_of(&self, y: &StructuredOutput) -> Option<usize> {
        self.index.get(&y.mask()).map(|&i| i as usize)
    }

    pub fn require_index(&self, y: &StructuredOutput) -> Result<usize> {
        self.index_of(y).ok_or_else(|| Error::InvalidStructure(y.to_string()))
    }

    /// Feature pairs of output `i` (active when the matching input bit is set).
    pub fn pairs(&self, i: usize) -> &[u16] {
        &self.pairs[self.pair_offsets[i] as usize..self.pair_offsets[i + 1] as usize]
    }

    /// `⟨φ(x, y_i), w⟩` given `xw = x ∘ w`.
    #[inline]
    pub fn score(&self, i: usize, xw: &[f64]) -> f64 {
        self.pairs(i).iter().map(|&p| xw[p as usize]).sum()
    }

    pub fn scores(&self, xw: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.score(i, xw)).collect()
    }

    /// Adds `scale * φ(x, y_i)` into `acc`.
    #[inline]
    pub fn accumulate_features(&self, i: usize, x: &StructuredInput, scale: f64, acc: &mut [f64]) {
        let bits = x.bits();
        for &p in self.pairs(i) {
            if bits[p as usize] {
                acc[p as usize] += scale;
            }
        }
    }

    pub fn features(&self, i: usize, x: &StructuredInput) -> FeatureVector {
        let mut phi = FeatureVector::zeros(self.family.feature_dim());
        self.accumulate_features(i, x, 1.0, &mut phi.0);
        phi
    }

    /// Unnormalized Hamming distance (symmetric-difference size).
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> u32 {
        (self.masks[i] ^ self.masks[j]).count_ones()
    }

    /// Normalized Hamming distance in `[0, 1]`.
    pub fn hamming(&self, i: usize, j: usize) -> f64 {
        normalized(self.distance(i, j), &self.family)
    }

    /// All structures within unnormalized distance `k` of output `i`,
    /// excluding `i`, in canonical order.
    pub fn neighbors(&self, i: usize, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mask = self.masks[i];
        let present: Vec<u16> = self.outputs[i].components.clone();
        let absent: Vec<u16> = (0..self.family.component_count() as u16)
            .filter(|&c| mask & (1u64 << c) == 0)
            .collect();
        let fixed = self.family.fixed_size().is_some();
        let moves = |a: usize, b: usize| binomial(present.len(), a) * binomial(absent.len(), b);
        let generated: u128 = (0..=k)
            .flat_map(|a| (0..=k - a).map(move |b| (a, b)))
            .filter(|&(a, b)| !fixed || a == b)
            .map(|(a, b)| moves(a, b))
            .sum();

        let mut out: Vec<usize> = if generated > self.len() as u128 {
            (0..self.len())
                .filter(|&j| j != i && self.distance(i, j) as usize <= k)
                .collect()
        } else {
            let mut found = Vec::new();
            for a in 0..=k.min(present.len()) {
                for b in 0..=(k - a).min(absent.len()) {
                    if (a == 0 && b == 0) || (fixed && a != b) {
                        continue;
                    }
                    for_each_combination(&present, a, &mut |removed| {
                        let base = removed.iter().fold(mask, |m, &c| m & !(1u64 << c));
                        for_each_combination(&absent, b, &mut |added| {
                            let m = added.iter().fold(base, |m, &c| m | (1u64 << c));
                            if let Some(&j) = self.index.get(&m) {
                                found.push(j as usize);
                            }
                        });
                    });
                }
            }
            found
        };
        out.sort_unstable();
        out
    }
}

/// Precomputed `neighbors_k` lists for every structure of a space.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    k: usize,
    lists: Vec<Vec<u32>>,
}

impl NeighborTable {
    pub fn build(space: &OutputSpace, k: usize) -> Self {
        let lists = (0..space.len())
            .into_par_iter()
            .map(|i| space.neighbors(i, k).into_iter().map(|j| j as u32).collect())
            .collect();
        Self { k, lists }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.lists[i]
    }
}

/// All valid structures for `family`, sorted by canonical key.
pub fn enumerate_outputs(family: &StructureFamily, x: &StructuredInput) -> Result<Vec<StructuredOutput>> {
    x.check_len(family)?;
    Ok(OutputSpace::enumerate(*family)?.outputs)
}

pub fn feature_map(family: &StructureFamily, x: &StructuredInput, y: &StructuredOutput) -> Result<FeatureVector> {
    family.features(x, y)
}

/// Normalized Hamming distance between two structures of `family`.
pub fn hamming(family: &StructureFamily, y: &StructuredOutput, y2: &StructuredOutput) -> f64 {
    normalized((y.mask() ^ y2.mask()).count_ones(), family)
}

/// `neighbors_k(y)` with the unnormalized distance threshold `k`.
pub fn neighbors_k(space: &OutputSpace, y: &StructuredOutput, k: usize) -> Result<Vec<StructuredOutput>> {
    let i = space.require_index(y)?;
    Ok(space.neighbors(i, k).into_iter().map(|j| space.output(j).clone()).collect())
}

fn normalized(distance: u32, family: &StructureFamily) -> f64 {
    let norm = family.hamming_normalizer();
    if norm == 0 {
        0.0
    } else {
        distance as f64 / norm as f64
    }
}

/// Index of the unordered pair `i < j` among `n` items.
pub fn triangular_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn for_each_combination<T: Copy>(items: &[T], size: usize, f: &mut dyn FnMut(&[T])) {
    fn rec<T: Copy>(items: &[T], start: usize, size: usize, buf: &mut Vec<T>, f: &mut dyn FnMut(&[T])) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let need = size - buf.len();
        for i in start..=items.len().saturating_sub(need) {
            if i >= items.len() {
                break;
            }
            buf.push(items[i]);
            rec(items, i + 1, size, buf, f);
            buf.pop();
        }
    }
    if size > items.len() {
        return;
    }
    let mut buf = Vec::with_capacity(size);
    rec(items, 0, size, &mut buf, f);
}

fn odometer_step(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn odometer_step_mixed<T>(digits: &mut [usize], options: &[Vec<T>]) -> bool {
    for (d, opts) in digits.iter_mut().zip(options) {
        *d += 1;
        if *d < opts.len() {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exactly one root and every node reaches it by following parents.
fn is_arborescence(parents: &[Option<usize>]) -> bool {
    let v = parents.len();
    if parents.iter().filter(|p| p.is_none()).count() != 1 {
        return false;
    }
    (0..v).all(|start| {
        let mut node = start;
        for _ in 0..v {
            match parents[node] {
                None => return true,
                Some(p) => node = p,
            }
        }
        false
    })
}

fn is_acyclic(children: &[Vec<usize>], mut indegree: Vec<usize>) -> bool {
    let mut stack: Vec<usize> = (0..indegree.len()).filter(|&n| indegree[n] == 0).collect();
    let mut seen = 0;
    while let Some(n) = stack.pop() {
        seen += 1;
        for &c in &children[n] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                stack.push(c);
            }
        }
    }
    seen == indegree.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(k: usize, u: usize) -> StructureFamily {
        StructureFamily::subset(k, u).unwrap()
    }

    #[test]
    fn subset_counts() {
        let x = StructuredInput::zeros(set(4, 15).input_len());
        assert_eq!(enumerate_outputs(&set(4, 15), &x).unwrap().len(), 1365);
        let small = enumerate_outputs(&set(1, 3), &StructuredInput::zeros(3)).unwrap();
        let comps: Vec<&[u16]> = small.iter().map(|y| y.components()).collect();
        assert_eq!(comps, vec![&[0u16][..], &[1], &[2]]);
    }

    #[test]
    fn spanning_tree_count_matches_cayley() {
        for v in 2..=6 {
            let space = OutputSpace::enumerate(StructureFamily::spanning_tree(v).unwrap()).unwrap();
            assert_eq!(space.len() as u128, (v as u128).pow(v as u32 - 1));
        }
    }

    #[test]
    fn dag_counts_match_brute_force_tally() {
        // Counts of labeled DAGs with in-degree <= p, tallied independently
        // by filtering all parent-set assignments.
        for (v, p, n) in [(3, 2, 25), (3, 1, 16), (4, 2, 443), (5, 2, 13956)] {
            let space = OutputSpace::enumerate(StructureFamily::dag(v, p).unwrap()).unwrap();
            assert_eq!(space.len(), n, "dag:{v}:{p}");
        }
    }

    #[test]
    fn enumeration_is_sorted_unique_and_valid() {
        for fam in ["tree:4", "dag:4:2", "set:3:7"] {
            let family: StructureFamily = fam.parse().unwrap();
            let space = OutputSpace::enumerate(family).unwrap();
            assert!(space.outputs().windows(2).all(|w| w[0] < w[1]));
            for y in space.outputs() {
                assert!(family.is_valid(y.components()));
                let again = StructuredOutput::from_components(y.components().to_vec()).unwrap();
                assert_eq!(&again, y);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            OutputSpace::with_budget(set(4, 15), 1000),
            Err(Error::EnumerationBudget { budget: 1000 })
        ));
        assert!(matches!(
            OutputSpace::with_budget(StructureFamily::dag(5, 2).unwrap(), 5000),
            Err(Error::EnumerationBudget { .. })
        ));
        assert!(OutputSpace::enumerate(StructureFamily::spanning_tree(8).unwrap()).is_err());
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(StructureFamily::subset(0, 5).is_err());
        assert!(StructureFamily::subset(6, 5).is_err());
        assert!(StructureFamily::spanning_tree(1).is_err());
        assert!(StructureFamily::dag(9, 2).is_err());
        assert!("cube:3".parse::<StructureFamily>().is_err());
    }

    #[test]
    fn family_string_round_trip() {
        for s in ["tree:6", "dag:5:2", "set:4:15"] {
            assert_eq!(s.parse::<StructureFamily>().unwrap().to_string(), s);
        }
        assert_eq!("set".parse::<StructureFamily>().unwrap(), set(4, 15));
    }

    #[test]
    fn edge_index_bijection() {
        let fam = StructureFamily::dag(5, 2).unwrap();
        let mut seen = vec![false; fam.component_count()];
        for s in 0..5 {
            for t in 0..5 {
                if s == t {
                    assert!(fam.edge_index(s, t).is_none());
                    continue;
                }
                let e = fam.edge_index(s, t).unwrap();
                assert_eq!(fam.edge_endpoints(e), Some((s, t)));
                assert!(!seen[e as usize]);
                seen[e as usize] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn feature_map_single_pair_and_zero_input() {
        let fam = set(2, 6);
        let y = StructuredOutput::from_components(vec![1, 4]).unwrap();
        let phi = feature_map(&fam, &StructuredInput::ones(fam.input_len()), &y).unwrap();
        let ones: Vec<usize> = (0..phi.len()).filter(|&j| phi.0[j] != 0.0).collect();
        assert_eq!(ones, vec![triangular_index(1, 4, 6)]);

        let phi0 = feature_map(&fam, &StructuredInput::zeros(fam.input_len()), &y).unwrap();
        assert!(phi0.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_map_subset_of_four_has_six_pairs() {
        let fam = set(4, 15);
        let y = StructuredOutput::from_components(vec![1, 2, 3, 4]).unwrap();
        let phi = feature_map(&fam, &StructuredInput::ones(fam.input_len()), &y).unwrap();
        // count pairs by direct enumeration of i < j in y
        let mut expected = 0;
        for i in 1..=4 {
            for j in (i + 1)..=4 {
                assert_eq!(phi.0[triangular_index(i, j, 15)], 1.0);
                expected += 1;
            }
        }
        assert_eq!(phi.values().iter().filter(|&&v| v == 1.0).count(), expected);
        assert_eq!(expected, 6);
    }

    #[test]
    fn tree_edge_activates_unordered_pair() {
        let fam = StructureFamily::spanning_tree(3).unwrap();
        let e01 = fam.edge_index(0, 1).unwrap();
        let e21 = fam.edge_index(2, 1).unwrap();
        let y = StructuredOutput::from_components(vec![e01, e21]).unwrap();
        assert!(!fam.is_valid(y.components()), "node 1 has two parents");
        let e12 = fam.edge_index(1, 2).unwrap();
        let y = StructuredOutput::from_components(vec![e01, e12]).unwrap();
        assert!(fam.is_valid(y.components()));
        let phi = feature_map(&fam, &StructuredInput::ones(3), &y).unwrap();
        assert_eq!(phi.0, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn feature_map_rejects_bad_dims() {
        let fam = set(2, 4);
        let y = StructuredOutput::from_components(vec![0, 1]).unwrap();
        assert!(matches!(
            feature_map(&fam, &StructuredInput::ones(3), &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hamming_examples() {
        let fam = set(2, 6);
        let a = StructuredOutput::from_components(vec![0, 1]).unwrap();
        let b = StructuredOutput::from_components(vec![2, 3]).unwrap();
        assert_eq!(hamming(&fam, &a, &a), 0.0);
        assert_eq!(hamming(&fam, &a, &b), 1.0);

        let tree = StructureFamily::spanning_tree(6).unwrap();
        let chain: Vec<u16> = (0..5).map(|i| tree.edge_index(i, i + 1).unwrap()).collect();
        let mut swapped = chain.clone();
        // replace 4 -> 5 with 0 -> 5
        swapped[4] = tree.edge_index(0, 5).unwrap();
        let y = StructuredOutput::from_components(chain).unwrap();
        let y2 = StructuredOutput::from_components(swapped).unwrap();
        assert!(tree.is_valid(y.components()) && tree.is_valid(y2.components()));
        assert!((hamming(&tree, &y, &y2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn dag_normalizer_is_attained() {
        for (v, p) in [(3, 1), (3, 2), (4, 2)] {
            let fam = StructureFamily::dag(v, p).unwrap();
            let space = OutputSpace::enumerate(fam).unwrap();
            let mut best = 0;
            for i in 0..space.len() {
                for j in 0..space.len() {
                    best = best.max(space.distance(i, j));
                }
            }
            assert_eq!(best as usize, fam.hamming_normalizer(), "dag:{v}:{p}");
        }
    }

    #[test]
    fn neighbors_examples() {
        let space = OutputSpace::enumerate(set(4, 15)).unwrap();
        let y = space.output(0).clone();
        assert!(neighbors_k(&space, &y, 0).unwrap().is_empty());
        assert_eq!(neighbors_k(&space, &y, 2).unwrap().len(), 44);
        assert_eq!(neighbors_k(&space, &y, 8).unwrap().len(), space.len() - 1);
    }

    #[test]
    fn neighbors_match_filtered_enumeration() {
        for fam in ["tree:4", "dag:4:2", "set:3:8"] {
            let space = OutputSpace::enumerate(fam.parse().unwrap()).unwrap();
            for k in 1..=4 {
                for i in (0..space.len()).step_by(7) {
                    let brute: Vec<usize> = (0..space.len())
                        .filter(|&j| {
                            let d = (space.output(i).mask() ^ space.output(j).mask()).count_ones();
                            d > 0 && d as usize <= k
                        })
                        .collect();
                    assert_eq!(space.neighbors(i, k), brute, "{fam} k={k} i={i}");
                }
            }
        }
    }
}
