//! Average ranks, the Friedman test and Hochberg's step-up post-hoc procedure
//! for comparing `k` methods over `N` groups (datasets).

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::midranks;
use crate::special::{chi2_sf, normal_sf};

/// `k` methods (rows) by `N` groups (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    methods: Vec<String>,
    groups: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl RankTable {
    pub fn new(methods: Vec<String>, groups: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if methods.len() < 2 || groups.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "rank table needs k >= 2 and N >= 2, got k={}, N={}",
                methods.len(),
                groups.len()
            )));
        }
        if values.len() != methods.len() || values.iter().any(|r| r.len() != groups.len()) {
            return Err(Error::Shape("rank table values do not match method/group names".into()));
        }
        if values.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("rank table contains NaN".into()));
        }
        Ok(Self { methods, groups, values })
    }

    /// CSV with a header `method,<group>,...` and one row per method.
    pub fn from_csv_reader(reader: impl Read, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::csv(source, e))?.clone();
        let groups: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut methods = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(source, e))?;
            methods.push(rec.get(0).unwrap_or_default().to_owned());
            let vals = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(c, field)| {
                    field.parse::<f64>().map_err(|e| Error::Parse {
                        path: source.to_path_buf(),
                        row: row + 2,
                        column: header.get(c + 1).unwrap_or_default().to_owned(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(vals);
        }
        Self::new(methods, groups, values)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, path)
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.methods.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Rank of every method within each group (1 = best), midranks on ties.
    /// Indexed `[group][method]`.
    pub fn group_ranks(&self, higher_is_better: bool) -> Vec<Vec<f64>> {
        (0..self.n_groups())
            .map(|g| {
                let col: Vec<f64> = self
                    .values
                    .iter()
                    .map(|r| if higher_is_better { -r[g] } else { r[g] })
                    .collect();
                midranks(&col)
            })
            .collect()
    }
}

pub fn average_ranks(table: &RankTable, higher_is_better: bool) -> Vec<f64> {
    let ranks = table.group_ranks(higher_is_better);
    let n = table.n_groups() as f64;
    (0..table.k())
        .map(|j| ranks.iter().map(|g| g[j]).sum::<f64>() / n)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// `12N / (k(k+1)) * (sum R_j^2 - k(k+1)^2 / 4)` on average ranks, no tie
/// correction; p-value from the chi-squared tail with `k - 1` dof.
pub fn friedman(table: &RankTable) -> Result<FriedmanResult> {
    let k = table.k();
    if k < 3 {
        return Err(Error::InvalidInput(format!("Friedman test needs k >= 3, got {k}")));
    }
    let n = table.n_groups() as f64;
    let kf = k as f64;
    let sum_sq: f64 = average_ranks(table, true).iter().map(|r| r * r).sum();
    let statistic = (12.0 * n / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    Ok(FriedmanResult {
        statistic,
        dof: k - 1,
        p_value: chi2_sf(statistic, (k - 1) as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub method: String,
    pub average_rank: f64,
    pub z: f64,
    pub p_value: f64,
}

/// The best-ranked method against every other, from average-rank
/// differences: `z = (R_i - R_best) / sqrt(k(k+1) / (6N))`, two-sided.
pub fn pairwise_vs_best(table: &RankTable, higher_is_better: bool) -> (usize, Vec<PairwiseTest>) {
    let ranks = average_ranks(table, higher_is_better);
    let best = (0..ranks.len())
        .min_by(|&a, &b| ranks[a].total_cmp(&ranks[b]).then(a.cmp(&b)))
        .expect("k >= 2");
    let kf = table.k() as f64;
    let se = (kf * (kf + 1.0) / (6.0 * table.n_groups() as f64)).sqrt();
    let tests = (0..ranks.len())
        .filter(|&j| j != best)
        .map(|j| {
            let z = (ranks[j] - ranks[best]) / se;
            PairwiseTest {
                method: table.methods[j].clone(),
                average_rank: ranks[j],
                z,
                p_value: (2.0 * normal_sf(z.abs())).min(1.0),
            }
        })
        .collect();
    (best, tests)
}

fn check_p(p_values: &[f64]) -> Result<()> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput("no p-values".into()));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Hochberg step-up: with ascending `p_(1) <= ... <= p_(h)`, find the largest
/// `j` with `p_(j) <= alpha / (h - j + 1)` and reject every `p <= p_(j)`.
pub fn hochberg_stepup(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_p(p_values)?;
    let h = p_values.len();
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=h)
        .rev()
        .find(|&j| sorted[j - 1] <= alpha / (h - j + 1) as f64)
        .map(|j| sorted[j - 1]);
    Ok(p_values
        .iter()
        .map(|&p| cutoff.is_some_and(|c| p <= c))
        .collect())
}

pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_p(p_values)?;
    let h = p_values.len() as f64;
    Ok(p_values.iter().map(|&p| p <= alpha / h).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub methods: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub friedman: Option<FriedmanResult>,
    pub best: String,
    pub alpha: f64,
    pub post_hoc: Vec<PostHoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHoc {
    #[serde(flatten)]
    pub test: PairwiseTest,
    pub rejected: bool,
}

pub fn rank_report(table: &RankTable, higher_is_better: bool, alpha: f64) -> Result<RankReport> {
    let (best, tests) = pairwise_vs_best(table, higher_is_better);
    let p: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    let rejected = hochberg_stepup(&p, alpha)?;
    Ok(RankReport {
        methods: table.methods.clone(),
        average_ranks: average_ranks(table, higher_is_better),
        friedman: if table.k() >= 3 { Some(friedman(table)?) } else { None },
        best: table.methods[best].clone(),
        alpha,
        post_hoc: tests
            .into_iter()
            .zip(rejected)
            .map(|(test, rejected)| PostHoc { test, rejected })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn table(values: Vec<Vec<f64>>) -> RankTable {
        let k = values.len();
        let n = values[0].len();
        RankTable::new(
            (0..k).map(|i| format!("m{i}")).collect(),
            (0..n).map(|i| format!("g{i}")).collect(),
            values,
        )
        .unwrap()
    }

    fn fixture() -> RankTable {
        RankTable::from_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/method_scores.csv")).unwrap()
    }

    #[test]
    fn simple_ranks() {
        let t = table(vec![vec![0.9, 0.5], vec![0.1, 0.5]]);
        assert_eq!(t.group_ranks(true)[0], vec![1.0, 2.0]);
        assert_eq!(t.group_ranks(true)[1], vec![1.5, 1.5]);
        assert_eq!(average_ranks(&t, true), vec![1.25, 1.75]);
        assert_eq!(average_ranks(&t, false), vec![1.75, 1.25]);
    }

    #[test]
    fn identical_methods() {
        let t = table(vec![vec![0.3; 4]; 5]);
        let f = friedman(&t).unwrap();
        assert_eq!(f.statistic, 0.0);
        assert!((f.p_value - 1.0).abs() < 1e-12);
        assert!(friedman(&table(vec![vec![1.0, 2.0]; 2])).is_err());
    }

    #[test]
    fn hand_sized_oracle() {
        // 3 methods x 3 groups, by definition from per-group rank sums
        let t = table(vec![vec![0.9, 0.8, 0.2], vec![0.5, 0.9, 0.3], vec![0.1, 0.1, 0.7]]);
        // ranks per group: g0 [1,2,3], g1 [2,1,3], g2 [3,2,1]
        let sums = [6.0, 5.0, 7.0];
        let (n, k) = (3.0, 3.0);
        let expected = 12.0 / (n * k * (k + 1.0)) * sums.iter().map(|s: &f64| s * s).sum::<f64>() - 3.0 * n * (k + 1.0);
        let f = friedman(&t).unwrap();
        assert!((f.statistic - expected).abs() < 1e-12);
        let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(expected);
        assert!((f.p_value - p).abs() <= 1e-8 * p);
    }

    #[test]
    fn fixture_ranks() {
        let t = fixture();
        assert_eq!((t.k(), t.n_groups()), (13, 7));
        let ranks = average_ranks(&t, true);
        let printed = [9.3, 5.6, 1.6, 4.7, 4.7, 3.9, 6.0, 5.0, 8.1, 8.9, 12.9, 9.4, 11.0];
        for (r, p) in ranks.iter().zip(printed) {
            assert!((r - p).abs() <= 0.3, "{r} vs {p}");
        }
        assert!((ranks[2] - 11.0 / 7.0).abs() < 1e-12);
        let report = rank_report(&t, true, 0.05).unwrap();
        assert_eq!(report.best, "UAE");
    }

    #[test]
    fn hochberg_cases() {
        assert_eq!(hochberg_stepup(&[0.01], 0.05).unwrap(), vec![true]);
        assert_eq!(hochberg_stepup(&[0.04, 0.04], 0.05).unwrap(), vec![true, true]);
        assert_eq!(hochberg_stepup(&[0.9, 0.9, 0.9], 0.05).unwrap(), vec![false; 3]);
        // 0.2 > 0.05, 0.03 > 0.05 / 2, 0.01 <= 0.05 / 3
        assert_eq!(hochberg_stepup(&[0.01, 0.03, 0.2], 0.05).unwrap(), vec![true, false, false]);
        assert!(hochberg_stepup(&[], 0.05).is_err());
        assert!(hochberg_stepup(&[1.5], 0.05).is_err());
    }

    #[test]
    fn csv_parse_error_located() {
        let data = "method,a,b\nx,0.1,oops\ny,0.2,0.3\n";
        let err = RankTable::from_csv_reader(data.as_bytes(), Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, ref column, .. } if column == "b"));
    }

    proptest! {
        #[test]
        fn group_rank_sums(v in proptest::collection::vec(0u8..5, 12)) {
            let vals: Vec<Vec<f64>> = v.chunks(3).map(|c| c.iter().map(|&x| x as f64).collect()).collect();
            let t = table(vals);
            for g in t.group_ranks(true) {
                prop_assert_eq!(g.iter().sum::<f64>(), 4.0 * 5.0 / 2.0);
            }
        }

        #[test]
        fn friedman_monotone_invariant(v in proptest::collection::vec(0.01f64..1.0, 20)) {
            let vals: Vec<Vec<f64>> = v.chunks(5).map(|c| c.to_vec()).collect();
            let t = table(vals.clone());
            let transformed = table(vals.iter().map(|r| r.iter().map(|x| x.ln() * 3.0 + 7.0).collect()).collect());
            let a = friedman(&t).unwrap().statistic;
            let b = friedman(&transformed).unwrap().statistic;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn hochberg_superset_of_bonferroni(p in proptest::collection::vec(0.0f64..=0.2, 1..20), alpha in 0.01f64..0.1) {
            let h = hochberg_stepup(&p, alpha).unwrap();
            let b = bonferroni(&p, alpha).unwrap();
            for (hh, bb) in h.iter().zip(b) {
                prop_assert!(*hh || !bb);
            }
        }
    }
}
