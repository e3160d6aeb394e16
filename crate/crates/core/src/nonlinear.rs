//! Wick-ordered cubic nonlinearity, its pairing decompositions, the
//! resonant right-hand side and small-divisor counting.
//!
//! Trilinear objects take `(f1, f2, f3)` with the middle argument
//! conjugated. Products are formed on the grid and re-analyzed; the
//! caller's basis must resolve the integrand (its grid is exact for four
//! harmonics of degree `basis.n_max()`).
//!
//! The exotic products `f ⬡= g` and `f ⬡≠ g` are the paired and non-paired
//! specializations `(2,3)` and `[2,3]` of [`trilinear_pairing`] on the inner
//! pair; the ladder diagnostics evaluate them directly on the grid.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::SpectralField;
use crate::harmonics::HarmonicBasis;

type C64 = Complex64;

/// Pair `(j,k)` and non-pair `[j,k]` conditions on the degree indices
/// `n_0..n_3` of a trilinear sum, 0 being the output degree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairingConstraint {
    pairs: Vec<(usize, usize)>,
    non_pairs: Vec<(usize, usize)>,
}

fn normalize(p: (usize, usize)) -> (usize, usize) {
    (p.0.min(p.1), p.0.max(p.1))
}

impl PairingConstraint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(pairs: &[(usize, usize)], non_pairs: &[(usize, usize)]) -> Result<Self> {
        let pairs: Vec<_> = pairs.iter().copied().map(normalize).collect();
        let non_pairs: Vec<_> = non_pairs.iter().copied().map(normalize).collect();
        for &(a, b) in pairs.iter().chain(&non_pairs) {
            if a > 3 || b > 3 || a == b {
                return Err(Error::Input(format!("invalid index pair ({a},{b})")));
            }
        }
        if let Some(p) = pairs.iter().find(|p| non_pairs.contains(p)) {
            return Err(Error::Input(format!("({},{}) is both paired and non-paired", p.0, p.1)));
        }
        Ok(Self { pairs, non_pairs })
    }

    /// Parses strings such as `"(0,1)[2,3]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut non_pairs = Vec::new();
        let mut rest = text.trim();
        while !rest.is_empty() {
            let (open, close, target) = match rest.chars().next() {
                Some('(') => ('(', ')', &mut pairs),
                Some('[') => ('[', ']', &mut non_pairs),
                _ => return Err(Error::Input(format!("cannot parse constraint {text:?}"))),
            };
            let end = rest.find(close).ok_or_else(|| Error::Input(format!("unclosed {open} in {text:?}")))?;
            let inner = &rest[1..end];
            let nums: Vec<usize> = inner
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Input(format!("bad index list {inner:?}")))?;
            if nums.len() != 2 {
                return Err(Error::Input(format!("expected two indices in {inner:?}")));
            }
            target.push((nums[0], nums[1]));
            rest = rest[end + 1..].trim_start();
        }
        Self::new(&pairs, &non_pairs)
    }

    fn all(&self) -> impl Iterator<Item = ((usize, usize), bool)> + '_ {
        self.pairs.iter().map(|&p| (p, true)).chain(self.non_pairs.iter().map(|&p| (p, false)))
    }

    fn satisfied(&self, deg: &[usize; 4], with_output: bool) -> bool {
        self.all().all(|((a, b), paired)| {
            if (a == 0) != with_output {
                return true;
            }
            (deg[a] == deg[b]) == paired
        })
    }
}

/// Grid samples of each degree of `f`.
fn degree_samples(f: &SpectralField, basis: &HarmonicBasis) -> Result<Vec<Vec<C64>>> {
    (0..=f.n_max()).map(|n| basis.synthesize_degrees(f, n, n)).collect()
}

fn check_out(basis: &HarmonicBasis, n_out: usize) -> Result<()> {
    if n_out > basis.n_max() {
        return Err(Error::Input(format!("output degree {n_out} exceeds basis degree {}", basis.n_max())));
    }
    Ok(())
}

/// `ḡh − ⟨h|g⟩`, the Wick product, analyzed up to `n_out`.
pub fn wick_square_pair(
    g: &SpectralField,
    h: &SpectralField,
    basis: &HarmonicBasis,
    n_out: usize,
) -> Result<SpectralField> {
    check_out(basis, n_out)?;
    let gv = basis.synthesize(g)?;
    let hv = basis.synthesize(h)?;
    let mean = h.inner(g);
    let prod: Vec<C64> = gv.iter().zip(&hv).map(|(a, b)| a.conj() * b - mean).collect();
    basis.analyze(&prod, n_out)
}

/// `N(u) = |u|²u − 2‖u‖²u`, analyzed up to `n_out`.
pub fn wick_cubic(u: &SpectralField, basis: &HarmonicBasis, n_out: usize) -> Result<SpectralField> {
    check_out(basis, n_out)?;
    let v = basis.synthesize(u)?;
    let m2 = 2.0 * u.norm_sqr();
    let prod: Vec<C64> = v.iter().map(|z| z * (z.norm_sqr() - m2)).collect();
    basis.analyze(&prod, n_out)
}

/// Grid samples of `N(u)` before analysis.
pub fn wick_cubic_samples(values: &[C64], mass: f64) -> Vec<C64> {
    values.iter().map(|z| z * (z.norm_sqr() - 2.0 * mass)).collect()
}

/// The polarized form `N(f,g,h) = f ḡ h − ⟨h|g⟩f − ⟨f|g⟩h`, so that
/// `N(u,u,u) = N(u)`.
pub fn trilinear(
    f: &SpectralField,
    g: &SpectralField,
    h: &SpectralField,
    basis: &HarmonicBasis,
    n_out: usize,
) -> Result<SpectralField> {
    check_out(basis, n_out)?;
    let fv = basis.synthesize(f)?;
    let gv = basis.synthesize(g)?;
    let hv = basis.synthesize(h)?;
    let hg = h.inner(g);
    let fg = f.inner(g);
    let prod: Vec<C64> = fv.iter().zip(&gv).zip(&hv).map(|((a, b), c)| a * b.conj() * c - hg * a - fg * c).collect();
    basis.analyze(&prod, n_out)
}

/// `Σ π_{n0}(π_{n1}f1 · conj(π_{n2}f2) · π_{n3}f3)` over degree tuples
/// obeying `c`, for output degrees `n0 ≤ n_out`. No Wick subtraction.
///
/// Indices not mentioned by `c` are summed in closed form (the whole field
/// is used); constrained ones are looped over explicitly.
pub fn trilinear_pairing(
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
    c: &PairingConstraint,
    basis: &HarmonicBasis,
    n_out: usize,
) -> Result<SpectralField> {
    check_out(basis, n_out)?;
    let fields = [f1, f2, f3];
    let mut involved = [false; 4];
    let mut tied_to_output = [false; 4];
    for ((a, b), _) in c.all() {
        involved[a] = true;
        involved[b] = true;
        if a == 0 {
            tied_to_output[b] = true;
        }
    }
    let mut per_degree: [Option<Vec<Vec<C64>>>; 4] = [None, None, None, None];
    let mut whole: [Option<Vec<C64>>; 4] = [None, None, None, None];
    for j in 1..=3 {
        if involved[j] {
            per_degree[j] = Some(degree_samples(fields[j - 1], basis)?);
        } else {
            whole[j] = Some(basis.synthesize(fields[j - 1])?);
        }
    }
    let ranges: [usize; 4] = [0, f1.n_max(), f2.n_max(), f3.n_max()];
    let len = basis.grid().len();

    // Accumulate products grouped by the degrees tied to the output index.
    let mut groups: BTreeMap<[usize; 4], Vec<C64>> = BTreeMap::new();
    let mut deg = [0usize; 4];
    let loop_hi = |j: usize| if involved[j] { ranges[j] } else { 0 };
    for d1 in 0..=loop_hi(1) {
        for d2 in 0..=loop_hi(2) {
            for d3 in 0..=loop_hi(3) {
                deg[1] = d1;
                deg[2] = d2;
                deg[3] = d3;
                if !c.satisfied(&deg, false) {
                    continue;
                }
                let mut key = [usize::MAX; 4];
                for j in 1..=3 {
                    if tied_to_output[j] {
                        key[j] = deg[j];
                    }
                }
                let factor = |j: usize| -> &[C64] {
                    match &per_degree[j] {
                        Some(v) => &v[deg[j]],
                        None => whole[j].as_deref().unwrap(),
                    }
                };
                let (a, b, cc) = (factor(1), factor(2), factor(3));
                let acc = groups.entry(key).or_insert_with(|| vec![C64::new(0.0, 0.0); len]);
                for i in 0..len {
                    acc[i] += a[i] * b[i].conj() * cc[i];
                }
            }
        }
    }

    let mut out = SpectralField::zeros(n_out);
    for (key, values) in groups {
        let analyzed = basis.analyze(&values, n_out)?;
        for n0 in 0..=n_out {
            deg = key;
            deg[0] = n0;
            if c.satisfied(&deg, true) {
                for (o, v) in out.degree_mut(n0).iter_mut().zip(analyzed.degree(n0)) {
                    *o += v;
                }
            }
        }
    }
    Ok(out)
}

/// `N_{(0,1)}(f,g,h) = Σ_n π_n(π_n f · (g ⋄ h))` over the degrees of `f`.
pub fn singular_form(
    f: &SpectralField,
    g: &SpectralField,
    h: &SpectralField,
    basis: &HarmonicBasis,
) -> Result<SpectralField> {
    singular_form_degrees(f, g, h, basis, 0, f.n_max())
}

/// [`singular_form`] restricted to output degrees `lo..=hi`.
pub fn singular_form_degrees(
    f: &SpectralField,
    g: &SpectralField,
    h: &SpectralField,
    basis: &HarmonicBasis,
    lo: usize,
    hi: usize,
) -> Result<SpectralField> {
    let hi = hi.min(f.n_max());
    let gv = basis.synthesize(g)?;
    let hv = basis.synthesize(h)?;
    let mean = h.inner(g);
    let wick: Vec<C64> = gv.iter().zip(&hv).map(|(a, b)| a.conj() * b - mean).collect();
    let mut out = SpectralField::zeros(f.n_max());
    for n in lo..=hi {
        if f.degree_mass(n) == 0.0 {
            continue;
        }
        let fv = basis.synthesize_degrees(f, n, n)?;
        let prod: Vec<C64> = fv.iter().zip(&wick).map(|(a, b)| a * b).collect();
        let part = basis.analyze_degrees(&prod, n, n)?;
        out.degree_mut(n).copy_from_slice(part.degree(n));
    }
    Ok(out)
}

/// `Σ_n ⟨π_n a|π_n b⟩ π_n c` restricted by a predicate on the degree pair
/// `(n_ab, n_c)`; shared by the decomposition corrections.
fn diagonal_correction(
    a: &SpectralField,
    b: &SpectralField,
    c: &SpectralField,
    n_out: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> SpectralField {
    let mut out = SpectralField::zeros(n_out);
    let top = a.n_max().min(b.n_max());
    let inners: Vec<C64> =
        (0..=top).map(|n| a.degree(n).iter().zip(b.degree(n)).map(|(x, y)| x * y.conj()).sum()).collect();
    for nc in 0..=c.n_max().min(n_out) {
        let mut coef = C64::new(0.0, 0.0);
        for (nab, v) in inners.iter().enumerate() {
            if keep(nab, nc) {
                coef += v;
            }
        }
        for (o, x) in out.degree_mut(nc).iter_mut().zip(c.degree(nc)) {
            *o += coef * x;
        }
    }
    out
}

/// The three pieces `N^(1), N^(2), N^(3)` of the pairing decomposition of
/// `N(f1,f2,f3)`, each analyzed up to `n_out`.
pub fn wick_parts(
    f1: &SpectralField,
    f2: &SpectralField,
    f3: &SpectralField,
    basis: &HarmonicBasis,
    n_out: usize,
) -> Result<[SpectralField; 3]> {
    let pc = |s: &str| PairingConstraint::parse(s).expect("static constraint");
    let n1 = trilinear_pairing(f1, f2, f3, &pc("[1,2][2,3]"), basis, n_out)?;

    let mut n2 = trilinear_pairing(f1, f2, f3, &pc("(2,3)[1,2]"), basis, n_out)?;
    n2 -= &diagonal_correction(f3, f2, f1, n_out, |n2, n1| n2 != n1);
    n2 += &trilinear_pairing(f1, f2, f3, &pc("(1,2)[2,3]"), basis, n_out)?;
    n2 -= &diagonal_correction(f1, f2, f3, n_out, |n2, n3| n2 != n3);

    let mut n3 = trilinear_pairing(f1, f2, f3, &pc("(1,2)(2,3)"), basis, n_out)?;
    n3 -= &diagonal_correction(f1, f2, f3, n_out, |a, b| a == b);
    n3 -= &diagonal_correction(f3, f2, f1, n_out, |a, b| a == b);
    Ok([n1, n2, n3])
}

/// ‖N(u) − N^(1) − N^(2) − N^(3)‖_{L²} with all terms analyzed up to the
/// basis degree.
pub fn decomposition_check(u: &SpectralField, basis: &HarmonicBasis) -> Result<f64> {
    let n_out = basis.n_max();
    let full = wick_cubic(u, basis, n_out)?;
    let [a, b, c] = wick_parts(u, u, u, basis, n_out)?;
    let mut r = full;
    r -= &a;
    r -= &b;
    r -= &c;
    Ok(r.norm_l2())
}

/// `Σ_{n,m} π_n(π_n u · |π_m u|²)`, the completely resonant right-hand side.
pub fn resonant_rhs(u: &SpectralField, basis: &HarmonicBasis) -> Result<SpectralField> {
    let parts = degree_samples(u, basis)?;
    let len = basis.grid().len();
    let mut w = vec![0.0; len];
    for p in &parts {
        for (wi, z) in w.iter_mut().zip(p) {
            *wi += z.norm_sqr();
        }
    }
    let mut out = SpectralField::zeros(u.n_max());
    for (n, p) in parts.iter().enumerate() {
        if u.degree_mass(n) == 0.0 {
            continue;
        }
        let prod: Vec<C64> = p.iter().zip(&w).map(|(z, wi)| z * wi).collect();
        let part = basis.analyze_degrees(&prod, n, n)?;
        out.degree_mut(n).copy_from_slice(part.degree(n));
    }
    Ok(out)
}

/// `#{(n2, n3): n2 ≠ n3 ≤ cap, λ_{n2}² − λ_{n3}² = m}`, counted through the
/// factorization `(n2 − n3)(n2 + n3 + 1) = m`.
pub fn divisor_count(m: i64, cap: usize) -> usize {
    if m == 0 {
        return 0;
    }
    let a = m.unsigned_abs();
    let mut divisors = Vec::new();
    let mut d = 1u64;
    while d * d <= a {
        if a.is_multiple_of(d) {
            divisors.push(d);
            if d * d != a {
                divisors.push(a / d);
            }
        }
        d += 1;
    }
    // n_hi − n_lo = diff and n_hi + n_lo + 1 = a / diff
    divisors
        .into_iter()
        .filter(|&diff| {
            let sum1 = a / diff;
            sum1 > diff && (diff + sum1) % 2 == 1 && (diff + sum1 - 1) / 2 <= cap as u64
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{sample_phi_alpha, GaussianStream};

    fn random_field(seed: u64, n: usize) -> SpectralField {
        sample_phi_alpha(&mut GaussianStream::new(seed, 0), 0.5, n)
    }

    #[test]
    fn constraint_parsing() {
        let c = PairingConstraint::parse("(0,1)[2,3]").unwrap();
        assert_eq!(c.pairs, vec![(0, 1)]);
        assert_eq!(c.non_pairs, vec![(2, 3)]);
        assert!(PairingConstraint::parse("(1,2)[2,1]").is_err());
        assert!(PairingConstraint::parse("(1,4)").is_err());
        assert!(PairingConstraint::parse("(1,1)").is_err());
        assert!(PairingConstraint::parse("{1,2}").is_err());
    }

    #[test]
    fn wick_square_examples() {
        let basis = HarmonicBasis::for_degree(4);
        let one = SpectralField::constant(2, C64::new(1.0, 0.0));
        assert!(wick_square_pair(&one, &one, &basis, 4).unwrap().norm_l2() < 1e-14);
        let b10 = SpectralField::mode(2, 1, 0);
        let w = wick_square_pair(&b10, &b10, &basis, 4).unwrap();
        assert!(w.get(0, 0).norm() < 1e-14);
        let b20 = SpectralField::mode(2, 2, 0);
        let plain = wick_square_pair(&b10, &b20, &basis, 4).unwrap();
        let prod = trilinear_pairing(
            &SpectralField::constant(2, C64::new(1.0, 0.0)),
            &b10,
            &b20,
            &PairingConstraint::none(),
            &basis,
            4,
        )
        .unwrap();
        assert!(plain.distance(&prod) < 1e-13);
    }

    #[test]
    fn wick_cubic_of_constant() {
        let basis = HarmonicBasis::for_degree(3);
        let c = C64::new(0.6, -0.3);
        let u = SpectralField::constant(1, c);
        let n = wick_cubic(&u, &basis, 3).unwrap();
        let expected = -c * c.norm_sqr();
        assert!((n.get(0, 0) - expected).norm() < 1e-14);
        assert!(n.coeffs()[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn wick_cubic_matches_unconstrained_pairing() {
        let basis = HarmonicBasis::for_degree(3);
        let u = SpectralField::mode(1, 1, 0);
        let direct = wick_cubic(&u, &basis, 3).unwrap();
        let raw = trilinear_pairing(&u, &u, &u, &PairingConstraint::none(), &basis, 3).unwrap();
        let corrected = &raw - &(&u.resized(3) * (2.0 * u.norm_sqr()));
        assert!(direct.distance(&corrected) < 1e-13);
        assert!((direct.norm_l2() - corrected.norm_l2()).abs() < 1e-13);
    }

    #[test]
    fn wick_cubic_is_cubic() {
        let basis = HarmonicBasis::for_degree(4);
        let u = random_field(3, 4);
        let a = wick_cubic(&(&u * 2.0), &basis, 4).unwrap();
        let b = &wick_cubic(&u, &basis, 4).unwrap() * 8.0;
        assert!(a.distance(&b) < 1e-12 * b.norm_l2().max(1.0));
    }

    #[test]
    fn polarization_recovers_cubic() {
        let basis = HarmonicBasis::for_degree(5);
        let u = random_field(4, 5);
        let a = wick_cubic(&u, &basis, 5).unwrap();
        let b = trilinear(&u, &u, &u, &basis, 5).unwrap();
        assert!(a.distance(&b) < 1e-12);
    }

    #[test]
    fn single_mode_pairings() {
        let basis = HarmonicBasis::for_degree(3);
        let f1 = SpectralField::mode(3, 2, 1);
        let f2 = SpectralField::mode(3, 3, -2);
        let f3 = SpectralField::mode(3, 3, 0);
        let full = trilinear_pairing(&f1, &f2, &f3, &PairingConstraint::none(), &basis, 3).unwrap();
        let paired = trilinear_pairing(&f1, &f2, &f3, &PairingConstraint::parse("(2,3)").unwrap(), &basis, 3).unwrap();
        let unpaired =
            trilinear_pairing(&f1, &f2, &f3, &PairingConstraint::parse("[2,3]").unwrap(), &basis, 3).unwrap();
        assert!(full.norm_l2() > 1e-3);
        assert!(full.distance(&paired) < 1e-14);
        assert!(unpaired.norm_l2() < 1e-14);
    }

    #[test]
    fn contradictory_constraints_give_zero() {
        let basis = HarmonicBasis::for_degree(3);
        let u = random_field(8, 3);
        let c = PairingConstraint::parse("(1,2)(2,3)[1,3]").unwrap();
        assert_eq!(trilinear_pairing(&u, &u, &u, &c, &basis, 3).unwrap().norm_l2(), 0.0);
    }

    #[test]
    fn singular_form_examples() {
        let basis = HarmonicBasis::for_degree(4);
        let one = SpectralField::constant(4, C64::new(1.0, 0.0));
        let f = random_field(5, 4);
        assert!(singular_form(&f, &one, &one, &basis).unwrap().norm_l2() < 1e-14);

        let b30 = SpectralField::mode(4, 3, 0);
        let b10 = SpectralField::mode(4, 1, 0);
        let s = singular_form(&b30, &b10, &b10, &basis).unwrap();
        assert!(s.degree_mass(3) > 1e-4);
        for n in [0, 1, 2, 4] {
            assert_eq!(s.degree_mass(n), 0.0);
        }
    }

    #[test]
    fn singular_form_equals_paired_sum_minus_diagonal() {
        let basis = HarmonicBasis::for_degree(4);
        let (f, g, h) = (random_field(1, 4), random_field(2, 4), random_field(3, 4));
        let s = singular_form(&f, &g, &h, &basis).unwrap();
        let raw = trilinear_pairing(&f, &g, &h, &PairingConstraint::parse("(0,1)").unwrap(), &basis, 4).unwrap();
        let expected = &raw - &(&f * h.inner(&g));
        assert!(s.distance(&expected) < 1e-12);
    }

    #[test]
    fn decomposition_of_constant_and_random() {
        let basis = HarmonicBasis::for_degree(4);
        let one = SpectralField::constant(4, C64::new(1.0, 0.0));
        assert!(decomposition_check(&one, &basis).unwrap() < 1e-14);
        let u = random_field(6, 4);
        assert!(decomposition_check(&u, &basis).unwrap() < 1e-10);
    }

    #[test]
    fn resonant_rhs_examples() {
        let basis = HarmonicBasis::for_degree(4);
        let c = C64::new(0.3, 0.8);
        let r = resonant_rhs(&SpectralField::constant(4, c), &basis).unwrap();
        assert!((r.get(0, 0) - c * c.norm_sqr()).norm() < 1e-14);

        let u = SpectralField::mode(4, 3, -2);
        let r = resonant_rhs(&u, &basis).unwrap();
        assert!(r.inner(&u).im.abs() < 1e-14);

        let u = random_field(9, 4);
        let r = resonant_rhs(&u, &basis).unwrap();
        for n in 0..=4 {
            let p: C64 = r.degree(n).iter().zip(u.degree(n)).map(|(a, b)| a * b.conj()).sum();
            assert!(p.im.abs() < 1e-12, "degree {n}: {}", p.im);
        }
    }

    #[test]
    fn divisor_examples() {
        assert_eq!(divisor_count(0, 10), 0);
        assert_eq!(divisor_count(2, 10), 1);
        assert_eq!(divisor_count(12, 10), 2);
        assert_eq!(divisor_count(-12, 10), 2);
    }
}
