use std::cmp::Ordering;
use std::fmt;

/// A sorted set of vertex labels.
///
/// Used for cliques, separators and product features. Sets order graded
/// lexicographically: smaller sets first, then lexicographic on the sorted
/// labels. Every block layout in the crate follows this order.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct VarSet(Vec<usize>);

impl VarSet {
    pub fn new(mut vertices: Vec<usize>) -> Self {
        vertices.sort_unstable();
        vertices.dedup();
        VarSet(vertices)
    }

    pub fn singleton(v: usize) -> Self {
        VarSet(vec![v])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn max_vertex(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn is_subset(&self, other: &VarSet) -> bool {
        self.0.iter().all(|v| other.contains(*v))
    }

    pub fn union(&self, other: &VarSet) -> VarSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        VarSet::new(v)
    }

    pub fn intersection(&self, other: &VarSet) -> VarSet {
        VarSet(
            self.0
                .iter()
                .copied()
                .filter(|v| other.contains(*v))
                .collect(),
        )
    }

    /// All nonempty subsets, in graded lexicographic order.
    pub fn nonempty_subsets(&self) -> Vec<VarSet> {
        subsets_up_to(&self.0, self.0.len())
    }

    /// Comma-separated labels, e.g. `0,2`.
    pub fn to_label(&self) -> String {
        self.0
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Ord for VarSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for VarSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_label())
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_label())
    }
}

impl From<&[usize]> for VarSet {
    fn from(v: &[usize]) -> Self {
        VarSet::new(v.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for VarSet {
    fn from(v: [usize; N]) -> Self {
        VarSet::new(v.to_vec())
    }
}

/// Nonempty subsets of `items` with at most `max_size` elements, in graded
/// lexicographic order. `items` must be sorted.
pub fn subsets_up_to(items: &[usize], max_size: usize) -> Vec<VarSet> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for size in 1..=max_size.min(items.len()) {
        combinations(items, size, 0, &mut current, &mut out);
    }
    out
}

/// Number of nonempty subsets of an `n`-set with at most `max_size` elements.
pub fn count_subsets_up_to(n: usize, max_size: usize) -> usize {
    let mut total = 0usize;
    let mut binom = 1usize;
    for k in 1..=max_size.min(n) {
        binom = binom * (n - k + 1) / k;
        total = total.saturating_add(binom);
    }
    total
}

fn combinations(
    items: &[usize],
    size: usize,
    start: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<VarSet>,
) {
    if current.len() == size {
        out.push(VarSet(current.clone()));
        return;
    }
    let need = size - current.len();
    for i in start..=items.len() - need {
        current.push(items[i]);
        combinations(items, size, i + 1, current, out);
        current.pop();
    }
}
