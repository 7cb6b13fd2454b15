//! Rank statistics: the Kruskal-Wallis H test with tie correction and the
//! chi-square survival function via the regularized upper incomplete gamma
//! function.

use crate::error::{PipelineError, Result};

/// Midranks of the pooled data plus the tie-group sizes.
pub fn rank_with_ties(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        if j > i {
            tie_sizes.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, tie_sizes)
}

#[derive(Debug, Clone, Copy)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
}

/// H over `groups` with the standard tie correction
/// `C = 1 - sum(t^3 - t)/(N^3 - N)`. All-equal data (C = 0) degenerates to
/// H = 0, p = 1.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(PipelineError::Evaluation(
            "Kruskal-Wallis needs at least two non-empty groups".into(),
        ));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let (ranks, tie_sizes) = rank_with_ties(&pooled);

    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let r_sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        h += r_sum * r_sum / g.len() as f64;
        offset += g.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let correction = 1.0 - tie_term / (n * n * n - n);
    let df = groups.len() - 1;
    if correction <= 0.0 {
        // Every observation identical: no rank variation.
        return Ok(KruskalWallis { h: 0.0, df, p_value: 1.0 });
    }
    let h = h / correction;
    Ok(KruskalWallis { h, df, p_value: chi_square_survival(h, df) })
}

/// P(X > x) for a chi-square with `df` degrees of freedom:
/// `Q(df/2, x/2)`, the regularized upper incomplete gamma function.
pub fn chi_square_survival(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    reg_upper_gamma(df as f64 / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma Q(a, x): series for the lower part at
/// x < a + 1, Lentz continued fraction above.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x)
    } else {
        upper_gamma_cf(a, x)
    }
}

/// P(a, x) by the power series x^a e^-x sum x^n / Gamma(a + n + 1).
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    (sum * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0)
}

/// Q(a, x) by the modified Lentz continued fraction.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (h * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0)
}

/// Lanczos log-gamma (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection for the left half-plane.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

// ------------------------------------------------- incidence-angle analysis

#[derive(Debug, Clone)]
pub struct AngleBin {
    pub angle_lo: f64,
    pub angle_hi: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct AngleAnalysis {
    pub bins: Vec<AngleBin>,
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Bin per-sample F1 by incidence angle (default width 1 degree), report
/// mean/std/count per bin, and test the bins with Kruskal-Wallis.
pub fn incidence_angle_analysis(records: &[(f64, f64)], bin_width: f64) -> Result<AngleAnalysis> {
    if records.is_empty() {
        return Err(PipelineError::Evaluation("no angle records".into()));
    }
    let lo = records.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let lo = (lo / bin_width).floor() * bin_width;
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for &(angle, f1) in records {
        let bin = ((angle - lo) / bin_width).floor() as usize;
        let bin_lo = lo + bin as f64 * bin_width;
        match groups.iter_mut().find(|(b, _)| (*b - bin_lo).abs() < 1e-9) {
            Some((_, v)) => v.push(f1),
            None => groups.push((bin_lo, vec![f1])),
        }
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if groups.len() < 2 {
        return Err(PipelineError::Evaluation(
            "need at least two non-empty angle bins for the rank test".into(),
        ));
    }
    let bins: Vec<AngleBin> = groups
        .iter()
        .map(|(b, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            AngleBin {
                angle_lo: *b,
                angle_hi: *b + bin_width,
                mean_f1: mean,
                std_f1: var.sqrt(),
                count: v.len(),
            }
        })
        .collect();
    let kw = kruskal_wallis(&groups.into_iter().map(|(_, v)| v).collect::<Vec<_>>())?;
    Ok(AngleAnalysis { bins, h: kw.h, df: kw.df, p_value: kw.p_value })
}

pub fn angle_analysis_csv(a: &AngleAnalysis) -> String {
    let mut s = String::from("angle_lo,angle_hi,mean_f1,std_f1,count\n");
    for b in &a.bins {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            b.angle_lo, b.angle_hi, b.mean_f1, b.std_f1, b.count
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_three_group_h() {
        // {1,2,3},{4,5,6},{7,8,9}: rank sums 6, 15, 24 -> H = 7.2, no ties.
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]])
            .unwrap();
        assert!((kw.h - 7.2).abs() < 1e-12, "{}", kw.h);
        assert_eq!(kw.df, 2);
    }

    #[test]
    fn all_identical_values_degenerate_to_zero() {
        let kw = kruskal_wallis(&[vec![5.0; 4], vec![5.0; 3], vec![5.0; 5]]).unwrap();
        assert_eq!(kw.h, 0.0);
        assert_eq!(kw.p_value, 1.0);
    }

    #[test]
    fn monotone_transform_leaves_h_unchanged() {
        let a = vec![0.3, 0.9, 0.7, 0.1];
        let b = vec![0.5, 0.55, 0.8];
        let c = vec![0.2, 0.65, 0.95, 0.4, 0.35];
        let base = kruskal_wallis(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let t = |v: &[f64]| v.iter().map(|&x| (3.0 * x).exp() + 1.0).collect::<Vec<_>>();
        let mapped = kruskal_wallis(&[t(&a), t(&b), t(&c)]).unwrap();
        assert!((base.h - mapped.h).abs() < 1e-9);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(2.0)).abs() < 1e-12);
        assert!((ln_gamma(5.0) - (24.0f64).ln()).abs() < 1e-10);
        assert!((ln_gamma(0.5) - (std::f64::consts::PI).sqrt().ln()).abs() < 1e-10);
    }

    #[test]
    fn chi_square_survival_closed_forms() {
        // df = 2: Q(x) = exp(-x/2).
        for x in [0.5, 1.0, 3.0, 10.0] {
            let expect = (-x / 2.0f64).exp();
            let got = chi_square_survival(x, 2);
            assert!((got - expect).abs() < 1e-12, "x={x}: {got} vs {expect}");
        }
        // df = 4: Q(x) = (1 + x/2) exp(-x/2).
        for x in [0.5, 2.0, 7.0] {
            let expect = (1.0 + x / 2.0) * (-x / 2.0f64).exp();
            let got = chi_square_survival(x, 4);
            assert!((got - expect).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn angle_bins_and_test() {
        let mut records = Vec::new();
        for i in 0..20 {
            records.push((31.2, 0.5 + 0.001 * i as f64));
            records.push((33.7, 0.7 + 0.001 * i as f64));
            records.push((40.1, 0.6 + 0.001 * i as f64));
        }
        let a = incidence_angle_analysis(&records, 1.0).unwrap();
        assert_eq!(a.bins.len(), 3);
        assert_eq!(a.bins[0].count, 20);
        assert!((a.bins[0].angle_lo - 31.0).abs() < 1e-9);
        assert!(a.h > 0.0);
        assert!(a.p_value < 0.05);
    }

    #[test]
    fn single_bin_is_an_error() {
        let records = vec![(35.2, 0.5), (35.3, 0.6)];
        assert!(incidence_angle_analysis(&records, 1.0).is_err());
    }
}
