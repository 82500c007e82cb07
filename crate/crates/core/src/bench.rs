//! Wall-clock latency and operation-count measurements for the Schnorr
//! baseline and both signing modes on the same group.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::{CryptoRng, RngCore};

use crate::energy::{ReportFormat, SchemeCost};
use crate::error::{Error, Result};
use crate::group::OpCounter;
use crate::scheme::{keygen, verify, LocalParties, Verdict};
use crate::schnorr;
use crate::snod::SnodParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencyStats {
    pub samples: usize,
    pub median: Duration,
    pub mean: Duration,
}

/// Times `iterations` calls of `f` individually.
pub fn measure(iterations: usize, mut f: impl FnMut(usize)) -> LatencyStats {
    assert!(iterations > 0, "need at least one iteration");
    let mut times: Vec<Duration> = (0..iterations)
        .map(|i| {
            let start = Instant::now();
            f(i);
            start.elapsed()
        })
        .collect();
    times.sort_unstable();
    let total: Duration = times.iter().sum();
    let median = if iterations % 2 == 1 {
        times[iterations / 2]
    } else {
        (times[iterations / 2 - 1] + times[iterations / 2]) / 2
    };
    LatencyStats {
        samples: iterations,
        median,
        mean: total / iterations as u32,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeBench {
    pub name: String,
    pub sign: LatencyStats,
    pub verify: LatencyStats,
    /// Operation counts of a single signature.
    pub sign_ops: OpCounter,
    /// Operation counts of a single verification, parties included.
    pub verify_ops: OpCounter,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchReport {
    pub schemes: Vec<SchemeBench>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchConfig {
    pub iterations: usize,
    /// Parameters for seed-based signing.
    pub esem: SnodParams,
    /// Parameters for table-cached signing.
    pub esem2: SnodParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: 10_000,
            esem: SnodParams::ESEM,
            esem2: SnodParams::ESEM2,
        }
    }
}

fn message(i: usize) -> [u8; 32] {
    let mut m = [0u8; 32];
    m[..8].copy_from_slice(&(i as u64).to_le_bytes());
    m
}

pub fn bench_schnorr<R: RngCore + CryptoRng>(iterations: usize, rng: &mut R) -> SchemeBench {
    let kp = schnorr::keygen(rng, &mut OpCounter::new());
    let mut sign_ops = OpCounter::new();
    let probe = schnorr::sign(&message(0), &kp.secret, rng, &mut sign_ops);
    let mut verify_ops = OpCounter::new();
    assert!(schnorr::verify(&message(0), &probe, &kp.public, &mut verify_ops));

    let mut scratch = OpCounter::new();
    let sign = measure(iterations, |i| {
        black_box(schnorr::sign(&message(i), &kp.secret, rng, &mut scratch));
    });
    let sigs: Vec<_> = (0..iterations)
        .map(|i| schnorr::sign(&message(i), &kp.secret, rng, &mut scratch))
        .collect();
    let verify = measure(iterations, |i| {
        black_box(schnorr::verify(&message(i), &sigs[i], &kp.public, &mut scratch));
    });
    SchemeBench {
        name: "Schnorr".into(),
        sign,
        verify,
        sign_ops,
        verify_ops,
    }
}

/// Signs with consecutive in-memory counters; nothing is persisted.
pub fn bench_esem<R: RngCore + CryptoRng>(
    name: &str,
    params: &SnodParams,
    cached: bool,
    iterations: usize,
    rng: &mut R,
) -> SchemeBench {
    let (sk, pk, shares) = keygen(params, rng, &mut OpCounter::new());
    let sk = if cached { sk.expand(&mut OpCounter::new()) } else { sk };
    let parties = LocalParties::complete(shares);

    let mut sign_ops = OpCounter::new();
    let probe = sk.sign_at(0, &message(0), &mut sign_ops);
    let mut verify_ops = OpCounter::new();
    // Party-side work is charged to the verifier here.
    let x = probe.x;
    for share in parties.shares() {
        crate::snod::party_construct(share, &x, &mut verify_ops);
    }
    verify_ops.point_adds += params.l() as u64 - 1;
    assert_eq!(verify(&message(0), &probe, &pk, &parties, &mut verify_ops), Verdict::Accept);

    let mut scratch = OpCounter::new();
    let sign = measure(iterations, |i| {
        black_box(sk.sign_at(i as u64, &message(i), &mut scratch));
    });
    let sigs: Vec<_> = (0..iterations)
        .map(|i| sk.sign_at(i as u64, &message(i), &mut scratch))
        .collect();
    let verify = measure(iterations, |i| {
        black_box(verify(&message(i), &sigs[i], &pk, &parties, &mut scratch));
    });
    SchemeBench {
        name: name.into(),
        sign,
        verify,
        sign_ops,
        verify_ops,
    }
}

pub fn run<R: RngCore + CryptoRng>(config: &BenchConfig, rng: &mut R) -> BenchReport {
    BenchReport {
        schemes: vec![
            bench_schnorr(config.iterations, rng),
            bench_esem("ESEM", &config.esem, false, config.iterations, rng),
            bench_esem("ESEM2", &config.esem2, true, config.iterations, rng),
        ],
    }
}

pub const BENCH_HEADER: &str = "scheme,op,iterations,median_us,mean_us,fixed_base_mults,var_base_mults,point_adds,scalar_mults,scalar_adds,prf_calls,hash_calls";

fn us(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

impl BenchReport {
    pub fn get(&self, name: &str) -> Option<&SchemeBench> {
        self.schemes.iter().find(|s| s.name == name)
    }

    /// Median sign latencies as energy-model inputs.
    pub fn sign_costs(&self) -> Vec<SchemeCost<f64>> {
        self.schemes
            .iter()
            .filter_map(|s| SchemeCost::new(s.name.clone(), s.sign.median.as_secs_f64()).ok())
            .collect()
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        let rows: Vec<(&str, &str, &LatencyStats, &OpCounter)> = self
            .schemes
            .iter()
            .flat_map(|s| {
                [
                    (s.name.as_str(), "sign", &s.sign, &s.sign_ops),
                    (s.name.as_str(), "verify", &s.verify, &s.verify_ops),
                ]
            })
            .collect();
        match format {
            ReportFormat::Csv => {
                let mut out = csv::Writer::from_writer(Vec::new());
                let csv_err = |e: csv::Error| Error::Format(e.to_string());
                out.write_record(BENCH_HEADER.split(',')).map_err(csv_err)?;
                for (name, op, st, ops) in rows {
                    out.write_record([
                        name.to_string(),
                        op.to_string(),
                        st.samples.to_string(),
                        format!("{:.3}", us(st.median)),
                        format!("{:.3}", us(st.mean)),
                        ops.fixed_base_mults.to_string(),
                        ops.var_base_mults.to_string(),
                        ops.point_adds.to_string(),
                        ops.scalar_mults.to_string(),
                        ops.scalar_adds.to_string(),
                        ops.prf_calls.to_string(),
                        ops.hash_calls.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                let bytes = out.into_inner().map_err(|e| Error::Format(e.to_string()))?;
                Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
            }
            ReportFormat::Text => {
                let mut out = format!(
                    "{:<8} {:<6} {:>7} {:>11} {:>11} {:>9} {:>7} {:>7} {:>5} {:>5}\n",
                    "scheme", "op", "iters", "median µs", "mean µs", "group ops", "s.mul", "s.add", "prf", "hash"
                );
                for (name, op, st, ops) in rows {
                    writeln!(
                        out,
                        "{:<8} {:<6} {:>7} {:>11.2} {:>11.2} {:>9} {:>7} {:>7} {:>5} {:>5}",
                        name,
                        op,
                        st.samples,
                        us(st.median),
                        us(st.mean),
                        ops.group_ops(),
                        ops.scalar_mults,
                        ops.scalar_adds,
                        ops.prf_calls,
                        ops.hash_calls
                    )
                    .expect("writing to a String");
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn measure_statistics() {
        let st = measure(5, |i| std::thread::sleep(Duration::from_micros(100 * i as u64)));
        assert_eq!(st.samples, 5);
        assert!(st.median >= Duration::from_micros(200));
        assert!(st.mean >= Duration::from_micros(200));
    }

    #[test]
    fn small_run_reports_profiles() {
        let mut rng = StdRng::seed_from_u64(80);
        let config = BenchConfig {
            iterations: 20,
            esem: SnodParams::toy(5, 32, 3).unwrap(),
            esem2: SnodParams::toy(5, 32, 3).unwrap(),
        };
        let report = run(&config, &mut rng);
        let schnorr = report.get("Schnorr").unwrap();
        let esem = report.get("ESEM").unwrap();
        let esem2 = report.get("ESEM2").unwrap();
        assert_eq!(schnorr.sign_ops.fixed_base_mults, 1);
        assert_eq!(esem.sign_ops.group_ops(), 0);
        assert_eq!(esem2.sign_ops.group_ops(), 0);
        assert!(esem2.sign_ops.prf_calls < esem.sign_ops.prf_calls);
        assert_eq!(esem.verify_ops.point_adds, 3 * 4 + 2 + 1);

        let csv = report.render(ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().next().unwrap(), BENCH_HEADER);
        assert_eq!(csv.lines().count(), 7);
        assert!(report.render(ReportFormat::Text).unwrap().contains("ESEM2"));
        assert_eq!(report.sign_costs().len(), 3);
    }
}
