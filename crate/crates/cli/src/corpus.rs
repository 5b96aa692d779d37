//! Corpus files, manifests, splits and screening.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use simplgen::engine::size_metric;
use simplgen::tuner::Metric;
use simplgen::{parse_dag, FormulaDag};

/// `*.dag` files directly under `dir`, sorted by name.
pub fn list_corpus(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "dag") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_dag(path: &Path) -> Result<FormulaDag> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dag(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_all(paths: &[PathBuf]) -> Result<Vec<FormulaDag>> {
    paths.par_iter().map(|p| load_dag(p)).collect()
}

/// A manifest lists one path per line.
pub fn write_manifest(path: &Path, files: &[PathBuf]) -> Result<()> {
    let text: String = files.iter().map(|f| format!("{}\n", f.display())).collect();
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(PathBuf::from)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub search: Vec<T>,
    pub train: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    /// The same split with Train and Test exchanged, for the second fold.
    pub fn swapped(self) -> Self {
        Split {
            search: self.search,
            train: self.test,
            test: self.train,
        }
    }
}

/// Part sizes for `n` items by largest remainder.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        bail!("split fractions {fractions:?} must be non-negative and sum to 1");
    }
    let exact = fractions.map(|f| f * n as f64);
    let mut sizes = exact.map(|x| x.floor() as usize);
    let mut rest: Vec<usize> = (0..3).collect();
    rest.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let short = n - sizes.iter().sum::<usize>();
    for &k in rest.iter().take(short) {
        sizes[k] += 1;
    }
    Ok(sizes)
}

/// Disjoint, covering random split, deterministic in `seed`.
pub fn split_corpus<T: Clone>(items: &[T], fractions: [f64; 3], seed: u64) -> Result<Split<T>> {
    if items.is_empty() {
        bail!("empty corpus");
    }
    let [a, b, _] = split_sizes(items.len(), fractions)?;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| {
        let mut r = r.to_vec();
        r.sort_unstable();
        r.into_iter().map(|i| items[i].clone()).collect()
    };
    Ok(Split {
        search: pick(&idx[..a]),
        train: pick(&idx[a..a + b]),
        test: pick(&idx[a + b..]),
    })
}

/// Indices of benchmarks with at least `min_terms` operations and, when a
/// cost hook is given, a cost strictly inside the given bounds.
pub fn filter_corpus(
    dags: &[FormulaDag],
    min_terms: usize,
    hook: Option<&dyn Metric>,
    min_cost: Option<f64>,
    max_cost: Option<f64>,
) -> Result<Vec<usize>> {
    if hook.is_none() && (min_cost.is_some() || max_cost.is_some()) {
        bail!("cost thresholds need a cost command");
    }
    let mut keep = Vec::new();
    for (i, d) in dags.iter().enumerate() {
        if size_metric(d) < min_terms {
            continue;
        }
        if let Some(h) = hook {
            let c = h.measure(d).map_err(anyhow::Error::msg)?;
            if min_cost.is_some_and(|m| c <= m) || max_cost.is_some_and(|m| c >= m) {
                continue;
            }
        }
        keep.push(i);
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use simplgen::{Node, OpKind, Sort};

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..10).collect();
        let s = split_corpus(&items, [0.4, 0.3, 0.3], 5).unwrap();
        assert_eq!((s.search.len(), s.train.len(), s.test.len()), (4, 3, 3));
        assert_eq!(s, split_corpus(&items, [0.4, 0.3, 0.3], 5).unwrap());
        let mut all: Vec<usize> = s
            .search
            .iter()
            .chain(&s.train)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, items);
        let sw = s.clone().swapped();
        assert_eq!((sw.train.clone(), sw.test.clone()), (s.test, s.train));
        assert_eq!(
            split_sizes(60, [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]).unwrap(),
            [40, 10, 10]
        );
        assert!(split_corpus(&items, [0.5, 0.5, 0.5], 0).is_err());
        assert!(split_corpus::<usize>(&[], [0.4, 0.3, 0.3], 0).is_err());
    }

    fn chain(n: usize) -> FormulaDag {
        let mut nodes = vec![Node::source(Sort::Bool, "x")];
        for i in 0..n {
            nodes.push(Node::op(OpKind::Not, Sort::Bool, vec![i]));
        }
        FormulaDag::new(nodes, vec![n], 3).unwrap()
    }

    struct Cost;

    impl Metric for Cost {
        fn measure(&self, d: &FormulaDag) -> Result<f64, String> {
            Ok(d.len() as f64)
        }
    }

    #[test]
    fn filter_thresholds() {
        let dags: Vec<FormulaDag> = [4173, 6580, 23289, 68366].into_iter().map(chain).collect();
        assert_eq!(
            filter_corpus(&dags, 5000, None, None, None).unwrap(),
            vec![1, 2, 3]
        );
        assert_eq!(
            filter_corpus(&dags, 0, None, None, None).unwrap(),
            vec![0, 1, 2, 3]
        );
        assert!(filter_corpus(&dags, 0, None, Some(1.0), None).is_err());
        assert_eq!(
            filter_corpus(&dags, 0, Some(&Cost), Some(5000.0), Some(60000.0)).unwrap(),
            vec![1, 2]
        );
    }
}
