//! Reproducible Wiener-increment streams and measurement records.
//!
//! A [`NoiseStream`] is addressed by `(master_seed, trajectory_id)`: the seed
//! keys a ChaCha8 keystream, the trajectory id selects an independent stream,
//! and each increment consumes exactly one 64-bit word pair, so a stream can
//! be repositioned to any step counter in O(1) — required for checkpoint
//! restore and for running ensemble members in any order.
//!
//! Gaussian variates come from a fixed inverse-CDF map (Wichura's AS241,
//! double precision) applied to one uniform per draw. This pins the variate
//! algorithm itself, not just the seed, so sequences are bit-reproducible
//! across platforms; output metadata records the tag [`RNG_ALGORITHM`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Identifier for the pinned variate scheme, embedded in output provenance.
pub const RNG_ALGORITHM: &str = "chacha8/icdf-as241/v1";

/// Standard-normal quantile function (Wichura AS241, PPND16).
///
/// Relative accuracy ~1e-15 over (0, 1); `u` must lie strictly inside (0, 1).
pub fn standard_normal_icdf(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_608;
        let den = ((((((5.226_495_278_852_545_611e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { u } else { 1.0 - u };
    r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Reproducible stream of i.i.d. Gaussian increments with variance `dt`,
/// labeled by the realization `(master_seed, trajectory_id)`.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    trajectory_id: u64,
    dt: f64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory_id: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_id);
        NoiseStream {
            master_seed,
            trajectory_id,
            dt,
            counter: 0,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_id(&self) -> u64 {
        self.trajectory_id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of increments drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Repositions the stream so the next draw is increment `counter`.
    ///
    /// Each draw consumes exactly one `u64` (two keystream words), so the
    /// jump is O(1).
    pub fn seek(&mut self, counter: u64) {
        self.rng.set_word_pos(2u128 * counter as u128);
        self.counter = counter;
    }

    /// Next Wiener increment: Gaussian with mean 0 and variance `dt`.
    pub fn wiener_increment(&mut self) -> f64 {
        // map u64 -> (0,1) strictly, then through the fixed quantile function
        let bits = self.rng.next_u64();
        let u = ((bits >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0);
        self.counter += 1;
        standard_normal_icdf(u) * self.dt.sqrt()
    }
}

/// Free-function form of [`NoiseStream::wiener_increment`].
pub fn wiener_increment(stream: &mut NoiseStream) -> f64 {
    stream.wiener_increment()
}

/// Where a record came from, for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOrigin {
    pub master_seed: u64,
    pub trajectory_id: u64,
}

const RECORD_MAGIC: &[u8; 4] = b"QLYP";
const RECORD_VERSION: u32 = 1;

/// The detector output series `dy_n = ⟨x⟩_n dt + dW_n/√(8k)`, stored at full
/// step resolution so a trajectory can be reconstructed from it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub k: f64,
    pub dt: f64,
    pub dy: Vec<f64>,
    pub origin: Option<RecordOrigin>,
}

impl MeasurementRecord {
    pub fn new(k: f64, dt: f64, origin: Option<RecordOrigin>) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::RecordRequiresMeasurement);
        }
        Ok(MeasurementRecord {
            k,
            dt,
            dy: Vec::new(),
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.dy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dy.is_empty()
    }

    /// Appends `dy = mean_x·dt + dW/√(8k)`.
    pub fn append(&mut self, mean_x: f64, dw: f64) {
        self.dy.push(mean_x * self.dt + dw / (8.0 * self.k).sqrt());
    }

    /// Recovers the Wiener increment for `step` given the current trajectory
    /// mean: `dW = √(8k)·(dy_step − mean_x·dt)`.
    pub fn increment_at(&self, step: usize, mean_x_current: f64) -> Result<f64> {
        let dy = *self.dy.get(step).ok_or(Error::RecordIndexOutOfRange {
            step,
            len: self.dy.len(),
        })?;
        Ok((8.0 * self.k).sqrt() * (dy - mean_x_current * self.dt))
    }

    /// Little-endian binary form: magic "QLYP", version, k, dt, n_steps,
    /// master_seed, trajectory_id, then the dy values. Absent provenance is
    /// stored as zeros.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(RECORD_MAGIC)?;
        w.write_all(&RECORD_VERSION.to_le_bytes())?;
        w.write_all(&self.k.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.dy.len() as u64).to_le_bytes())?;
        let origin = self.origin.unwrap_or(RecordOrigin {
            master_seed: 0,
            trajectory_id: 0,
        });
        w.write_all(&origin.master_seed.to_le_bytes())?;
        w.write_all(&origin.trajectory_id.to_le_bytes())?;
        for dy in &self.dy {
            w.write_all(&dy.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RECORD_MAGIC {
            return Err(Error::BadMagic {
                path: path.display().to_string(),
                expected: "QLYP",
            });
        }
        let version = read_u32(&mut r)?;
        if version != RECORD_VERSION {
            return Err(Error::Version {
                path: path.display().to_string(),
                found: version,
                expected: RECORD_VERSION,
            });
        }
        let k = read_f64(&mut r)?;
        let dt = read_f64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let master_seed = read_u64(&mut r)?;
        let trajectory_id = read_u64(&mut r)?;
        let mut dy = Vec::with_capacity(n);
        for _ in 0..n {
            dy.push(read_f64(&mut r)?);
        }
        Ok(MeasurementRecord {
            k,
            dt,
            dy,
            origin: Some(RecordOrigin {
                master_seed,
                trajectory_id,
            }),
        })
    }

    /// CSV form `step,t,dy`, with optional `# `-prefixed provenance lines.
    pub fn export_csv<W: Write>(&self, mut w: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            for line in p.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        writeln!(w, "step,t,dy")?;
        for (i, dy) in self.dy.iter().enumerate() {
            writeln!(w, "{},{},{}", i, i as f64 * self.dt, dy)?;
        }
        Ok(())
    }
}

/// Free-function form of [`MeasurementRecord::append`]; `dt` and `k` must
/// match the record they were created with.
pub fn record_append(
    record: &mut MeasurementRecord,
    mean_x: f64,
    dt: f64,
    k: f64,
    dw: f64,
) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::RecordRequiresMeasurement);
    }
    if k != record.k {
        return Err(Error::RecordMismatch {
            field: "k",
            record: record.k,
            config: k,
        });
    }
    if dt != record.dt {
        return Err(Error::RecordMismatch {
            field: "dt",
            record: record.dt,
            config: dt,
        });
    }
    record.append(mean_x, dw);
    Ok(())
}

/// Free-function form of [`MeasurementRecord::increment_at`].
pub fn increment_from_record(
    record: &MeasurementRecord,
    step: usize,
    mean_x_current: f64,
) -> Result<f64> {
    record.increment_at(step, mean_x_current)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn icdf_matches_reference_quantiles() {
        // reference values from an independent implementation of Φ⁻¹
        let table: &[(f64, f64)] = &[
            (1e-300, -37.0470962993612),
            (1e-16, -8.222082216130435),
            (1e-10, -6.361340902404056),
            (1e-05, -4.264890793922825),
            (0.001, -3.090232306167813),
            (0.025, -1.9599639845400545),
            (0.1, -1.2815515655446004),
            (0.3, -0.5244005127080409),
            (0.425001, -0.18911587441617),
            (0.5, 0.0),
            (0.575, 0.18911842627279238),
            (0.7, 0.5244005127080407),
            (0.9, 1.2815515655446004),
            (0.975, 1.959963984540054),
            (0.999, 3.090232306167813),
            (0.99999, 4.264890793923841),
            (0.9999999999, 6.361340889697422),
            (0.9999999999999999, 8.209536151601387),
        ];
        for &(u, z) in table {
            let got = standard_normal_icdf(u);
            assert_abs_diff_eq!(got, z, epsilon = 1e-9 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = NoiseStream::new(42, 3, 1e-3);
        let mut b = NoiseStream::new(42, 3, 1e-3);
        for _ in 0..100 {
            assert_eq!(a.wiener_increment().to_bits(), b.wiener_increment().to_bits());
        }
    }

    #[test]
    fn seek_reproduces_sequential_draws() {
        let mut a = NoiseStream::new(9, 1, 0.01);
        let seq: Vec<f64> = (0..50).map(|_| a.wiener_increment()).collect();
        let mut b = NoiseStream::new(9, 1, 0.01);
        b.seek(25);
        for (i, &v) in seq.iter().enumerate().skip(25) {
            assert_eq!(b.wiener_increment().to_bits(), v.to_bits(), "draw {i}");
        }
        assert_eq!(b.counter(), 50);
    }

    #[test]
    fn increments_have_correct_moments() {
        let dt = 2e-3;
        let n = 1_000_000usize;
        let mut s = NoiseStream::new(1234, 0, dt);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let w = s.wiener_increment();
            sum += w;
            sq += w * w;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean = {mean}");
        assert!((var - dt).abs() < 0.01 * dt, "var = {var}");
    }

    #[test]
    fn distinct_ids_are_uncorrelated() {
        let n = 1_000_000usize;
        let mut a = NoiseStream::new(77, 0, 1.0);
        let mut b = NoiseStream::new(77, 1, 1.0);
        let mut sa = 0.0;
        let mut sb = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        let mut sab = 0.0;
        for _ in 0..n {
            let x = a.wiener_increment();
            let y = b.wiener_increment();
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let r = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!(r.abs() < 0.01, "cross-correlation r = {r}");
    }

    #[test]
    fn record_append_arithmetic() {
        let mut rec = MeasurementRecord::new(0.125, 1e-3, None).unwrap();
        rec.append(0.0, 0.0);
        assert_eq!(rec.dy[0], 0.0);
        rec.append(1.0, 0.0);
        assert_eq!(rec.dy[1], 1e-3);
        // sqrt(8 * 0.125) = 1, so dy = w for mean 0
        let w = 0.37;
        rec.append(0.0, w);
        assert_eq!(rec.dy[2], w);
    }

    #[test]
    fn record_rejects_nonpositive_k() {
        assert!(MeasurementRecord::new(0.0, 1e-3, None).is_err());
        assert!(MeasurementRecord::new(-1.0, 1e-3, None).is_err());
    }

    #[test]
    fn increment_recovery_is_algebraic_inverse() {
        let k = 0.7;
        let dt = 5e-4;
        let mut rec = MeasurementRecord::new(k, dt, None).unwrap();
        let mut s = NoiseStream::new(5, 0, dt);
        let means = [0.0, 0.3, -1.2, 2.5];
        let mut dws = Vec::new();
        for &m in &means {
            let w = s.wiener_increment();
            dws.push(w);
            rec.append(m, w);
        }
        for (i, &m) in means.iter().enumerate() {
            let w = rec.increment_at(i, m).unwrap();
            assert_abs_diff_eq!(w, dws[i], epsilon = 1e-12);
        }
        // dy = <x> dt exactly implies dW = 0
        let mut rec2 = MeasurementRecord::new(k, dt, None).unwrap();
        rec2.append(1.5, 0.0);
        assert_abs_diff_eq!(rec2.increment_at(0, 1.5).unwrap(), 0.0, epsilon = 1e-15);

        assert!(matches!(
            rec.increment_at(99, 0.0),
            Err(Error::RecordIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.qlyp");
        let mut rec = MeasurementRecord::new(
            0.01,
            1e-3,
            Some(RecordOrigin {
                master_seed: 99,
                trajectory_id: 4,
            }),
        )
        .unwrap();
        let mut s = NoiseStream::new(99, 4, 1e-3);
        for i in 0..1000 {
            rec.append(i as f64 * 0.01, s.wiener_increment());
        }
        rec.write_to(&path).unwrap();
        let back = MeasurementRecord::read_from(&path).unwrap();
        assert_eq!(rec, back);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.qlyp");
        let mut rec = MeasurementRecord::new(0.01, 1e-3, None).unwrap();
        for _ in 0..10 {
            rec.append(0.0, 0.1);
        }
        rec.write_to(&path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 4]).unwrap();
        assert!(MeasurementRecord::read_from(&path).is_err());
    }
}
