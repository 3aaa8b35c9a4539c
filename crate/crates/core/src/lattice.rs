//! Finite graphs with graph distance and set geometry.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Graph distance; `Infinite` is used for unreachable sites and empty sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dist {
    Finite(u32),
    Infinite,
}

impl Dist {
    pub fn finite(self) -> Option<u32> {
        match self {
            Dist::Finite(d) => Some(d),
            Dist::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Dist::Finite(d) => d as f64,
            Dist::Infinite => f64::INFINITY,
        }
    }

    pub fn add(self, other: Dist) -> Dist {
        match (self, other) {
            (Dist::Finite(a), Dist::Finite(b)) => Dist::Finite(a + b),
            _ => Dist::Infinite,
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Finite(d) => write!(f, "{d}"),
            Dist::Infinite => write!(f, "inf"),
        }
    }
}

/// Sorted, duplicate-free set of site indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SiteSet(Vec<usize>);

impl SiteSet {
    pub fn new(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        SiteSet(v)
    }

    pub fn empty() -> Self {
        SiteSet(Vec::new())
    }

    pub fn single(x: usize) -> Self {
        SiteSet(vec![x])
    }

    pub fn range(a: usize, b: usize) -> Self {
        SiteSet((a..b).collect())
    }

    pub fn sites(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn union(&self, o: &SiteSet) -> SiteSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&o.0);
        SiteSet::new(v)
    }

    pub fn intersection(&self, o: &SiteSet) -> SiteSet {
        SiteSet(self.0.iter().copied().filter(|x| o.contains(*x)).collect())
    }

    pub fn difference(&self, o: &SiteSet) -> SiteSet {
        SiteSet(self.0.iter().copied().filter(|x| !o.contains(*x)).collect())
    }

    pub fn is_subset(&self, o: &SiteSet) -> bool {
        self.0.iter().all(|x| o.contains(*x))
    }

    pub fn intersects(&self, o: &SiteSet) -> bool {
        self.0.iter().any(|x| o.contains(*x))
    }

    pub fn iter(&self) -> impl Iterator<Item = &usize> {
        self.0.iter()
    }
}

impl fmt::Display for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{{{}}}", s.join(" "))
    }
}

impl From<Vec<usize>> for SiteSet {
    fn from(v: Vec<usize>) -> Self {
        SiteSet::new(v)
    }
}

#[derive(Debug, Clone)]
pub struct Lattice {
    n: usize,
    edges: Vec<(usize, usize)>,
    dist: Vec<Vec<Dist>>,
    dims: Vec<usize>,
}

impl Lattice {
    pub fn chain(length: usize, site_dim: usize) -> Result<Lattice> {
        if length == 0 {
            return invalid("chain length must be at least 1");
        }
        let edges = (1..length).map(|i| (i - 1, i)).collect();
        Lattice::explicit(length, edges, vec![site_dim; length])
    }

    /// `w x h` rectangular grid; site `(i, j)` has index `j * w + i`.
    pub fn grid(w: usize, h: usize, site_dim: usize) -> Result<Lattice> {
        if w == 0 || h == 0 {
            return invalid("grid sides must be positive");
        }
        let mut edges = Vec::new();
        for j in 0..h {
            for i in 0..w {
                let s = j * w + i;
                if i + 1 < w {
                    edges.push((s, s + 1));
                }
                if j + 1 < h {
                    edges.push((s, s + w));
                }
            }
        }
        Lattice::explicit(w * h, edges, vec![site_dim; w * h])
    }

    pub fn explicit(n: usize, edges: Vec<(usize, usize)>, dims: Vec<usize>) -> Result<Lattice> {
        if n == 0 {
            return invalid("lattice needs at least one site");
        }
        if dims.len() != n {
            return invalid(format!("expected {n} site dimensions, got {}", dims.len()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return invalid(format!("site dimension {d} < 2"));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return invalid(format!("edge ({a},{b}) out of range"));
            }
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let dist = (0..n).map(|s| bfs(&adj, s)).collect();
        Ok(Lattice { n, edges, dist, dims })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet::range(0, self.n)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn site_dim(&self, x: usize) -> usize {
        self.dims[x]
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn hilbert_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dim_of(&self, x: &SiteSet) -> usize {
        x.iter().map(|&s| self.dims[s]).product()
    }

    pub fn dist(&self, x: usize, y: usize) -> Dist {
        self.dist[x][y]
    }

    pub fn contains(&self, x: &SiteSet) -> bool {
        x.iter().all(|&s| s < self.n)
    }

    pub fn is_connected(&self) -> bool {
        self.dist[0].iter().all(|d| *d != Dist::Infinite)
    }

    pub fn set_distance(&self, x: &SiteSet, y: &SiteSet) -> Dist {
        let mut best = Dist::Infinite;
        for &a in x.iter() {
            for &b in y.iter() {
                best = best.min(self.dist[a][b]);
            }
        }
        best
    }

    pub fn site_set_distance(&self, x: usize, y: &SiteSet) -> Dist {
        y.iter().map(|&b| self.dist[x][b]).min().unwrap_or(Dist::Infinite)
    }

    pub fn set_diameter(&self, x: &SiteSet) -> u32 {
        let mut d = 0;
        for &a in x.iter() {
            for &b in x.iter() {
                if let Dist::Finite(v) = self.dist[a][b] {
                    d = d.max(v);
                }
            }
        }
        d
    }

    pub fn diameter(&self) -> u32 {
        self.set_diameter(&self.all_sites())
    }

    pub fn fatten(&self, x: &SiteSet, n: u32) -> SiteSet {
        if x.is_empty() {
            return SiteSet::empty();
        }
        SiteSet(
            (0..self.n)
                .filter(|&s| matches!(self.site_set_distance(s, x), Dist::Finite(d) if d <= n))
                .collect(),
        )
    }

    pub fn ball(&self, x: usize, r: u32) -> SiteSet {
        self.fatten(&SiteSet::single(x), r)
    }

    /// Smallest `C` with `|B_r(x)| <= 1 + C r^d` for all sites and radii
    /// `1 <= r <= diameter`.
    pub fn verify_dimension_bound(&self, d: u32) -> f64 {
        let mut c = 0.0f64;
        for r in 1..=self.diameter() {
            for x in 0..self.n {
                let b = self.ball(x, r).len() as f64;
                c = c.max((b - 1.0) / (r as f64).powi(d as i32));
            }
        }
        c
    }
}

fn bfs(adj: &[Vec<usize>], s: usize) -> Vec<Dist> {
    let mut d = vec![Dist::Infinite; adj.len()];
    d[s] = Dist::Finite(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        let du = match d[u] {
            Dist::Finite(v) => v,
            Dist::Infinite => unreachable!(),
        };
        for &v in &adj[u] {
            if d[v] == Dist::Infinite {
                d[v] = Dist::Finite(du + 1);
                q.push_back(v);
            }
        }
    }
    d
}
