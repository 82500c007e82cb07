//! In-process experiment harness: brute-force oracles, toy instances with
//! a transcript of everything the parties saw, a collusion experiment and a
//! chi-square uniformity test for index-set samplers.

use std::collections::HashMap;
use std::io::Write;

use rand::{CryptoRng, Rng, RngCore};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bpv::sample_subset;
use crate::error::{Error, Result};
use crate::group::{add_points, scalar_add, GroupElement, OpCounter, Scalar};
use crate::kdf::{commitment_tag, h1_indexes, CommitmentTag, Seed};
use crate::scheme::{keygen, PublicKey, SigningKey};
use crate::snod::{party_construct, receiver_aggregate, PartyShare, SnodParams};

/// Largest `C(n, v)` the enumeration oracle will expand.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Significance level for the uniformity tests.
pub const SIGNIFICANCE: f64 = 0.001;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc·(n − i) is divisible by i + 1; cancel the common factor with
        // acc first so the product only overflows when the result does.
        let d = i as u128 + 1;
        let g = gcd(acc, d);
        let factor = (n - i) as u128 / (d / g);
        acc = match (acc / g).checked_mul(factor) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// All `v`-subsets of `[0, n)` in lexicographic order.
pub fn enumerate_index_subsets(n: usize, v: usize) -> Result<Vec<Vec<usize>>> {
    let count = binomial(n as u64, v as u64);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut out = Vec::with_capacity(count as usize);
    if v == 0 || v > n {
        return Ok(out);
    }
    let mut idx: Vec<usize> = (0..v).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..v).rev().find(|&p| idx[p] < n - v + p) else {
            return Ok(out);
        };
        idx[pos] += 1;
        for p in pos + 1..v {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// Every `(subset, Σ_{i∈subset} rᵢ)` over the `v`-subsets of `scalars`.
pub fn oracle_enumerate_subsets(scalars: &[Scalar], v: usize) -> Result<Vec<(Vec<usize>, Scalar)>> {
    let mut ops = OpCounter::new();
    Ok(enumerate_index_subsets(scalars.len(), v)?
        .into_iter()
        .map(|s| {
            let sum = s
                .iter()
                .fold(Scalar::ZERO, |acc, &i| scalar_add(&acc, &scalars[i], &mut ops));
            (s, sum)
        })
        .collect())
}

/// One reconstruction request as the parties saw it.
#[derive(Clone, Debug)]
pub struct TranscriptEntry {
    pub x: CommitmentTag,
    /// `R̄_j` in party order.
    pub responses: Vec<GroupElement>,
}

/// Complete key material for one instance plus a log of every request.
#[derive(Clone, Debug)]
pub struct ToyInstance {
    pub params: SnodParams,
    pub signing_key: SigningKey,
    pub public_key: PublicKey,
    pub shares: Vec<PartyShare>,
    pub transcript: Vec<TranscriptEntry>,
}

impl ToyInstance {
    pub fn new<R: RngCore + CryptoRng>(params: SnodParams, rng: &mut R) -> Self {
        let (signing_key, public_key, shares) = keygen(&params, rng, &mut OpCounter::new());
        ToyInstance {
            params,
            signing_key,
            public_key,
            shares,
            transcript: Vec::new(),
        }
    }

    /// Tag the signer would use at `counter`.
    pub fn tag(&self, counter: u64) -> CommitmentTag {
        commitment_tag(self.signing_key.secret(), counter, &mut OpCounter::new())
    }

    /// Runs one reconstruction for `x` through all parties, logs it, and
    /// returns `R`.
    pub fn query(&mut self, x: &CommitmentTag) -> GroupElement {
        let mut ops = OpCounter::new();
        let responses: Vec<GroupElement> = self
            .shares
            .iter()
            .map(|s| party_construct(s, x, &mut ops))
            .collect();
        let as_opts: Vec<Option<GroupElement>> = responses.iter().copied().map(Some).collect();
        let r = receiver_aggregate(&as_opts, self.params.l(), &mut ops)
            .expect("all parties are in-process");
        self.transcript.push(TranscriptEntry { x: *x, responses });
        r
    }
}

/// Outcome counts of [`run_collusion_experiment`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollusionReport {
    pub trials: u64,
    pub colluders: usize,
    /// Trials where any strategy produced `R` or the missing `R̄_j`.
    pub successes: u64,
    /// Trials where an adversary holding all `l` shares produced `R`.
    pub control_successes: u64,
}

fn sum_points(points: &[GroupElement], ops: &mut OpCounter) -> GroupElement {
    points
        .iter()
        .fold(GroupElement::identity(), |acc, p| add_points(&acc, p, ops))
}

/// Candidate values for the honest party's response, built from what a
/// coalition of the other parties holds.
fn adversary_guesses(
    colluding: &[&PartyShare],
    honest: usize,
    history: &[TranscriptEntry],
    x: &CommitmentTag,
    ops: &mut OpCounter,
) -> Vec<GroupElement> {
    let mut guesses = vec![GroupElement::identity()];
    // Replay and linear combinations of the honest party's past answers.
    if let Some(last) = history.last() {
        guesses.push(last.responses[honest]);
        if let Some(prev) = history.iter().rev().nth(1) {
            guesses.push(add_points(&last.responses[honest], &prev.responses[honest], ops));
        }
        guesses.push(sum_points(
            &history.iter().map(|e| e.responses[honest]).collect::<Vec<_>>(),
            ops,
        ));
    }
    // Own index sets applied to own tables, and own seeds applied to the
    // other colluders' tables.
    for a in colluding {
        guesses.push(party_construct(a, x, ops));
        for b in colluding {
            if a.j != b.j {
                let crossed = PartyShare {
                    seed: a.seed,
                    ..(*b).clone()
                };
                guesses.push(party_construct(&crossed, x, ops));
            }
        }
    }
    guesses
}

/// Each trial issues a fresh tag `x`. A coalition of `l − 1` parties (all
/// but party `honest`, 0-based) holding the full transcript tries to
/// produce the honest party's response or the aggregate `R`. A second
/// adversary holding every share serves as the positive control.
pub fn run_collusion_experiment(instance: &mut ToyInstance, trials: u64, honest: usize) -> CollusionReport {
    let l = instance.params.l();
    assert!(honest < l, "honest party index out of range");
    let mut ops = OpCounter::new();
    let mut successes = 0;
    let mut control_successes = 0;
    let first_counter = instance.transcript.len() as u64;
    for t in 0..trials {
        let x = instance.tag(first_counter + t);
        let history = instance.transcript.clone();
        let r = instance.query(&x);
        let actual = instance.transcript.last().expect("just queried").responses[honest];

        let colluding: Vec<&PartyShare> = instance
            .shares
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx != honest)
            .map(|(_, s)| s)
            .collect();
        let own: Vec<GroupElement> = colluding.iter().map(|s| party_construct(s, &x, &mut ops)).collect();
        let partial = sum_points(&own, &mut ops);
        let hit = adversary_guesses(&colluding, honest, &history, &x, &mut ops)
            .iter()
            .any(|g| *g == actual || add_points(&partial, g, &mut ops) == r);
        if hit {
            successes += 1;
        }

        let all: Vec<GroupElement> = instance.shares.iter().map(|s| party_construct(s, &x, &mut ops)).collect();
        if sum_points(&all, &mut ops) == r {
            control_successes += 1;
        }
    }
    CollusionReport {
        trials,
        colluders: l - 1,
        successes,
        control_successes,
    }
}

/// Where index sets come from in a uniformity test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Uniform `v`-subset from the RNG, as in single-party BPV.
    Bpv,
    /// `H_1(z || x)` for a fixed seed and random tags.
    HashDerived,
    /// Deliberately biased: half of all draws are the first subset.
    Rigged,
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Bpv => "bpv",
            Sampler::HashDerived => "h1",
            Sampler::Rigged => "rigged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityReport {
    pub sampler: Sampler,
    pub n: usize,
    pub v: usize,
    pub draws: u64,
    pub cells: usize,
    pub statistic: f64,
    pub critical: f64,
    pub p_value: f64,
}

impl UniformityReport {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Pearson chi-square of `draws` index sets against the uniform
/// distribution on all `C(n, v)` subsets.
pub fn run_uniformity_test<R: Rng>(
    sampler: Sampler,
    n: usize,
    v: usize,
    draws: u64,
    rng: &mut R,
) -> Result<UniformityReport> {
    let subsets = enumerate_index_subsets(n, v)?;
    let cells = subsets.len();
    if cells < 2 {
        return Err(Error::Params("need at least two cells".into()));
    }
    let index: HashMap<Vec<usize>, usize> = subsets.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    let seed = Seed(rng.gen());
    let mut counts = vec![0u64; cells];
    let mut ops = OpCounter::new();
    for _ in 0..draws {
        let mut s = match sampler {
            Sampler::Bpv => sample_subset(n, v, rng),
            Sampler::HashDerived => {
                let x = CommitmentTag(rng.gen());
                h1_indexes(&seed, &x, v, n, &mut ops).iter().collect()
            }
            Sampler::Rigged => {
                if rng.gen_bool(0.5) {
                    (0..v).collect()
                } else {
                    sample_subset(n, v, rng)
                }
            }
        };
        s.sort_unstable();
        counts[index[&s]] += 1;
    }
    let expected = draws as f64 / cells as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    Ok(UniformityReport {
        sampler,
        n,
        v,
        draws,
        cells,
        statistic,
        critical: dist.inverse_cdf(1.0 - SIGNIFICANCE),
        p_value: 1.0 - dist.cdf(statistic),
    })
}

pub const UNIFORMITY_CSV_HEADER: &str = "sampler,n,v,draws,cells,chi2,critical,p_value,pass";
pub const COLLUSION_CSV_HEADER: &str = "trials,colluders,successes,control_successes";

pub fn write_uniformity_csv<W: Write>(reports: &[UniformityReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(UNIFORMITY_CSV_HEADER.split(','))
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in reports {
        out.write_record([
            r.sampler.name().to_string(),
            r.n.to_string(),
            r.v.to_string(),
            r.draws.to_string(),
            r.cells.to_string(),
            format!("{:.3}", r.statistic),
            format!("{:.3}", r.critical),
            format!("{:.6}", r.p_value),
            r.passes().to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_collusion_csv<W: Write>(reports: &[CollusionReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLLUSION_CSV_HEADER.split(','))
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in reports {
        out.write_record([
            r.trials.to_string(),
            r.colluders.to_string(),
            r.successes.to_string(),
            r.control_successes.to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GROUP_ORDER_LE;
    use num_bigint::BigUint;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(8, 3), 56);
        assert_eq!(binomial(128, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(1024, 18), 205_966_057_488_760_845_115_333_492_006_729_616_896);
        assert_eq!(binomial(5000, 2500), u128::MAX);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let all = enumerate_index_subsets(8, 3).unwrap();
        assert_eq!(all.len(), 56);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[55], vec![5, 6, 7]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(enumerate_index_subsets(64, 8), Err(Error::TooLarge(_))));
    }

    #[test]
    fn subset_sums_agree_with_bigint() {
        let mut rng = StdRng::seed_from_u64(60);
        let scalars: Vec<Scalar> = (0..8).map(|_| Scalar::random_nonzero(&mut rng)).collect();
        let q = BigUint::from_bytes_le(&GROUP_ORDER_LE);
        for (subset, sum) in oracle_enumerate_subsets(&scalars, 3).unwrap() {
            let big: BigUint = subset
                .iter()
                .map(|&i| BigUint::from_bytes_le(&scalars[i].to_bytes()))
                .sum();
            assert_eq!(big % &q, BigUint::from_bytes_le(&sum.to_bytes()));
        }
    }

    #[test]
    fn toy_instance_reconstructs_nonce() {
        let mut rng = StdRng::seed_from_u64(61);
        let params = SnodParams::toy(3, 8, 2).unwrap();
        let mut inst = ToyInstance::new(params, &mut rng);
        let mut ops = OpCounter::new();
        for c in 0..20 {
            let (r, x) = crate::snod::sender(inst.signing_key.secret(), c, &params, &mut ops);
            assert_eq!(inst.query(&x), crate::group::mul_basepoint(&r, &mut ops));
        }
        assert_eq!(inst.transcript.len(), 20);
        assert_eq!(inst.transcript[0].responses.len(), 2);
    }

    #[test]
    fn collusion_small() {
        let mut rng = StdRng::seed_from_u64(62);
        let mut inst = ToyInstance::new(SnodParams::toy(5, 32, 3).unwrap(), &mut rng);
        let report = run_collusion_experiment(&mut inst, 100, 2);
        assert_eq!(report.colluders, 2);
        assert_eq!(report.successes, 0);
        assert_eq!(report.control_successes, 100);
    }

    #[test]
    fn collusion_single_party() {
        let mut rng = StdRng::seed_from_u64(63);
        let mut inst = ToyInstance::new(SnodParams::toy(5, 32, 1).unwrap(), &mut rng);
        let report = run_collusion_experiment(&mut inst, 50, 0);
        assert_eq!(report.colluders, 0);
        assert_eq!(report.successes, 0);
        assert_eq!(report.control_successes, 50);
    }

    #[test]
    fn uniformity_controls() {
        let mut rng = StdRng::seed_from_u64(64);
        let bpv = run_uniformity_test(Sampler::Bpv, 8, 3, 20_000, &mut rng).unwrap();
        assert_eq!(bpv.cells, 56);
        assert!(bpv.passes(), "{bpv:?}");
        let h1 = run_uniformity_test(Sampler::HashDerived, 8, 3, 20_000, &mut rng).unwrap();
        assert!(h1.passes(), "{h1:?}");
        let rigged = run_uniformity_test(Sampler::Rigged, 8, 3, 20_000, &mut rng).unwrap();
        assert!(!rigged.passes());
        assert!(rigged.p_value < SIGNIFICANCE);
    }

    #[test]
    fn critical_value_reference() {
        // Chi-square(55) upper 0.1% point from standard tables.
        let mut rng = StdRng::seed_from_u64(65);
        let r = run_uniformity_test(Sampler::Bpv, 8, 3, 100, &mut rng).unwrap();
        assert!((r.critical - 93.168).abs() < 0.01, "{}", r.critical);
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_uniformity_csv(&[], &mut buf).unwrap();
        assert_eq!(buf, format!("{UNIFORMITY_CSV_HEADER}\n").into_bytes());
        let mut buf = Vec::new();
        write_collusion_csv(
            &[CollusionReport {
                trials: 3,
                colluders: 2,
                successes: 0,
                control_successes: 3,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{COLLUSION_CSV_HEADER}\n3,2,0,3\n"));
    }
}
