//! Labeled sparse datasets in the de-facto SVM text interchange format.
//!
//! One point per line: `label idx:val idx:val ...` with 1-based, strictly
//! ascending feature indices. Labels are `+1`/`-1` (or `0`/`1` when the
//! remap flag is set). Lines starting with `#` and blank lines are skipped.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Sparse feature vector with 1-based, strictly ascending indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F> {
    indices: Vec<u32>,
    values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    pub fn new(indices: Vec<u32>, values: Vec<F>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                got: values.len(),
            });
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(format!(
                    "feature indices must be strictly ascending, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if indices.first().is_some_and(|&i| i == 0) {
            return Err(Error::Validation("feature indices are 1-based".into()));
        }
        Ok(SparseVector { indices, values })
    }

    pub fn empty() -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn max_index(&self) -> u32 {
        self.indices.last().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, F)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm_sq(&self) -> F {
        self.values
            .iter()
            .map(|&v| v * v)
            .fold(F::zero(), |a, b| a + b)
    }

    /// Sparse dot product by merge walk over the ascending index lists.
    pub fn dot(&self, other: &SparseVector<F>) -> F {
        let mut s = F::zero();
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.indices.len() && j < other.indices.len() {
            let (a, b) = (self.indices[i], other.indices[j]);
            if a == b {
                s = s + self.values[i] * other.values[j];
                i += 1;
                j += 1;
            } else if a < b {
                i += 1;
            } else {
                j += 1;
            }
        }
        s
    }
}

/// Immutable collection of sparse points with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    points: Vec<SparseVector<F>>,
    labels: Vec<i8>,
    num_features: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(points: Vec<SparseVector<F>>, labels: Vec<i8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::Validation(format!("label {bad} is not ±1")));
        }
        let num_features = points.iter().map(|p| p.max_index() as usize).max().unwrap_or(0);
        Ok(Dataset {
            points,
            labels,
            num_features,
        })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest feature index seen.
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn point(&self, i: usize) -> &SparseVector<F> {
        &self.points[i]
    }

    pub fn points(&self) -> &[SparseVector<F>] {
        &self.points
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn labels_scalar(&self) -> Vec<F> {
        self.labels.iter().map(|&y| F::cast(y as f64)).collect()
    }

    /// Count of +1 labels.
    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Deterministic subset of `n` points (sorted original order retained).
    pub fn subsample(&self, n: usize, seed: u64) -> Dataset<F> {
        let n = n.min(self.len());
        let all: Vec<usize> = (0..self.len()).collect();
        let picked = SplitMix64::substream(seed, 0x5eb5).sample_distinct(&all, n);
        self.take(&picked)
    }

    fn take(&self, idx: &[usize]) -> Dataset<F> {
        Dataset {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_features: self.num_features,
        }
    }
}

/// Bijection on `{0..d-1}`; `forward[i]` is the source position of output
/// slot `i`, `inverse` is its inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        Permutation {
            inverse: forward.clone(),
            forward,
        }
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (slot, &src) in forward.iter().enumerate() {
            if src >= n {
                return Err(Error::Validation(format!(
                    "permutation entry {src} out of range for size {n}"
                )));
            }
            if inverse[src] != usize::MAX {
                return Err(Error::Validation(format!("duplicate entry {src}")));
            }
            inverse[src] = slot;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// `self ∘ other`: applying the result equals applying `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: other.len(),
            });
        }
        let forward = self.forward.iter().map(|&i| other.forward[i]).collect();
        Permutation::from_forward(forward)
    }

    pub fn inverted(&self) -> Permutation {
        Permutation {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// Parse the sparse-row text format.
///
/// Strict mode accepts labels `+1`, `1`, `-1`; with `remap01` the accepted
/// set is `0`, `1` (and `+1`), remapped to −1/+1. Malformed tokens report
/// the 1-based line number.
pub fn parse_sparse_rows<F: Scalar, R: BufRead>(reader: R, remap01: bool) -> Result<Dataset<F>> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label = parse_label(label_tok, remap01, lineno)?;
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<F> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got `{tok}`"),
            })?;
            let idx: u32 = idx_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index `{idx_s}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if let Some(&prev) = indices.last() {
                if idx <= prev {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index {idx} not strictly ascending after {prev}"),
                    });
                }
            }
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value `{val_s}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite feature value `{val_s}`"),
                });
            }
            indices.push(idx);
            values.push(F::cast(val));
        }
        points.push(SparseVector { indices, values });
        labels.push(label);
    }
    Dataset::new(points, labels)
}

fn parse_label(tok: &str, remap01: bool, lineno: usize) -> Result<i8> {
    match (tok, remap01) {
        ("+1" | "1", _) => Ok(1),
        ("-1", false) => Ok(-1),
        ("0", true) => Ok(-1),
        ("0", false) => Err(Error::Validation(format!(
            "line {lineno}: label 0 requires the 0/1 remap flag"
        ))),
        ("-1", true) => Err(Error::Validation(format!(
            "line {lineno}: label -1 not in {{0,1}} under the remap flag"
        ))),
        _ => Err(Error::Parse {
            line: lineno,
            msg: format!("bad label `{tok}`"),
        }),
    }
}

/// Write in the same text format, with 17 significant digits so that a
/// parse round-trip reproduces `f64` values exactly.
pub fn write_sparse_rows<F: Scalar, W: Write>(ds: &Dataset<F>, w: &mut W) -> Result<()> {
    for i in 0..ds.len() {
        let label = if ds.label(i) == 1 { "+1" } else { "-1" };
        write!(w, "{label}")?;
        for (idx, val) in ds.point(i).iter() {
            write!(w, " {idx}:{:.16e}", val.as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Deterministic random split into `(train, test)`; the test part has
/// `round(test_fraction * d)` points.
pub fn random_split<F: Scalar>(
    ds: &Dataset<F>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset<F>, Dataset<F>)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "test fraction {test_fraction} not in (0,1)"
        )));
    }
    let d = ds.len();
    if d < 2 {
        return Err(Error::Validation("need at least 2 points to split".into()));
    }
    let n_test = (test_fraction * d as f64).round() as usize;
    if n_test == 0 || n_test == d {
        return Err(Error::Validation(format!(
            "degenerate split: test size {n_test} of {d}"
        )));
    }
    let all: Vec<usize> = (0..d).collect();
    let test_idx = SplitMix64::substream(seed, 0x5411).sample_distinct(&all, n_test);
    let mut is_test = vec![false; d];
    for &i in &test_idx {
        is_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..d).filter(|&i| !is_test[i]).collect();
    Ok((ds.take(&train_idx), ds.take(&test_idx)))
}

/// Reorder so that output point `i` is input point `p.forward()[i]`.
pub fn apply_permutation<F: Scalar>(ds: &Dataset<F>, p: &Permutation) -> Result<Dataset<F>> {
    if p.len() != ds.len() {
        return Err(Error::Dimension {
            expected: ds.len(),
            got: p.len(),
        });
    }
    Ok(ds.take(p.forward()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Dataset<f64> {
        parse_sparse_rows(Cursor::new(text), false).unwrap()
    }

    #[test]
    fn parses_basic_line() {
        let ds = parse("+1 1:0.5 3:2.0\n");
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.label(0), 1);
        assert_eq!(ds.num_features(), 3);
        let pairs: Vec<_> = ds.point(0).iter().collect();
        assert_eq!(pairs, vec![(1, 0.5), (3, 2.0)]);
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let ds = parse("# header\n\n+1 1:1.0\n-1 2:1.0\n\n");
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), &[1, -1]);
    }

    #[test]
    fn counts_match_nonempty_lines() {
        let text = "+1 1:1\n# c\n-1 1:2\n\n+1 2:3\n";
        let ds = parse(text);
        let expected = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))
            .count();
        assert_eq!(ds.len(), expected);
    }

    #[test]
    fn rejects_malformed_tokens() {
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 1:abc\n"), false);
        assert!(matches!(r, Err(Error::Parse { line: 1, .. })));
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 nocolon\n"), false);
        assert!(matches!(r, Err(Error::Parse { line: 1, .. })));
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 1:1\n+2 1:1\n"), false);
        assert!(matches!(r, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_non_ascending_indices() {
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 3:1 3:2\n"), false);
        assert!(matches!(r, Err(Error::Parse { .. })));
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 3:1 2:2\n"), false);
        assert!(matches!(r, Err(Error::Parse { .. })));
    }

    #[test]
    fn label_zero_needs_remap() {
        let r = parse_sparse_rows::<f64, _>(Cursor::new("0 1:1\n"), false);
        assert!(matches!(r, Err(Error::Validation(_))));
        let ds = parse_sparse_rows::<f64, _>(Cursor::new("0 1:1\n1 2:1\n"), true).unwrap();
        assert_eq!(ds.labels(), &[-1, 1]);
    }

    #[test]
    fn rejects_non_finite_values() {
        let r = parse_sparse_rows::<f64, _>(Cursor::new("+1 1:inf\n"), false);
        assert!(matches!(r, Err(Error::Parse { .. })));
    }

    #[test]
    fn roundtrip_preserves_exact_values() {
        let text = "+1 1:0.1 7:-3.25e-7 9:1e300\n-1 2:0.30000000000000004\n";
        let ds = parse(text);
        let mut buf = Vec::new();
        write_sparse_rows(&ds, &mut buf).unwrap();
        let ds2 = parse_sparse_rows::<f64, _>(Cursor::new(buf), false).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let text: String = (0..10)
            .map(|i| format!("{} 1:{i}\n", if i % 2 == 0 { "+1" } else { "-1" }))
            .collect();
        let ds = parse(&text);
        let (tr, te) = random_split(&ds, 0.3, 9).unwrap();
        assert_eq!(te.len(), 3);
        assert_eq!(tr.len(), 7);
        let (tr2, te2) = random_split(&ds, 0.3, 9).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        // disjoint: feature values identify rows uniquely here
        let vals = |d: &Dataset<f64>| -> Vec<i64> {
            d.points()
                .iter()
                .map(|p| p.iter().next().unwrap().1 as i64)
                .collect()
        };
        let mut all = vals(&tr);
        all.extend(vals(&te));
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_size_large_instance() {
        // round(0.3 * 171540) = 51462
        assert_eq!((0.3f64 * 171540.0).round() as usize, 51462);
    }

    #[test]
    fn permutation_roundtrip() {
        let text = "+1 1:0\n-1 1:1\n+1 1:2\n-1 1:3\n";
        let ds = parse(text);
        let p = Permutation::from_forward(vec![2, 0, 3, 1]).unwrap();
        let permuted = apply_permutation(&ds, &p).unwrap();
        assert_eq!(permuted.labels(), &[1, 1, -1, -1]);
        let back = apply_permutation(&permuted, &p.inverted()).unwrap();
        assert_eq!(back, ds);
        let id = Permutation::identity(4);
        assert_eq!(apply_permutation(&ds, &id).unwrap(), ds);
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::from_forward(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_forward(vec![0, 3]).is_err());
    }

    #[test]
    fn permutation_size_mismatch_errors() {
        let ds = parse("+1 1:1\n-1 1:2\n");
        let p = Permutation::identity(3);
        assert!(apply_permutation(&ds, &p).is_err());
    }
}
