//! Binary checkpoints of a [`RunState`].
//!
//! Layout (little endian): the magic `QADI1`, the state fields in declaration
//! order, then a CRC-32 of everything before it.

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{RunState, SeriesPoint};
use crate::stepper::StepState;

pub const MAGIC: &[u8; 5] = b"QADI1";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn vec(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("length overflow".into()))
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.data.len() - self.pos) / 8 {
            return Err(Error::CorruptCheckpoint(format!("vector length {n} exceeds blob")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::CorruptCheckpoint(format!("bad flag byte {b}"))),
        }
    }
}

pub fn save(state: &RunState) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    let s = &state.step;
    w.vec(&s.v);
    w.f64(s.t);
    w.f64(s.tau);
    w.u64(s.k as u64);
    w.vec(&s.deriv);
    match &s.deriv_prev {
        Some(d) => {
            w.u8(1);
            w.vec(d);
        }
        None => w.u8(0),
    }
    w.u8(state.adapting as u8);
    w.u64(state.steady_count as u64);
    w.u64(state.rng_seed);
    w.u128(state.rng_word_pos);
    w.u8(state.overflowed as u8);
    w.u64(state.series.len() as u64);
    for p in &state.series {
        w.u64(p.k as u64);
        w.f64(p.t);
        w.f64(p.tau);
        w.f64(p.max_v);
        w.f64(p.max_dvdt);
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn load(blob: &[u8]) -> Result<RunState> {
    if blob.len() < MAGIC.len() + 4 {
        return Err(Error::CorruptCheckpoint(format!("blob of {} bytes is too short", blob.len())));
    }
    let magic = &blob[..MAGIC.len()];
    if magic != MAGIC {
        if magic.starts_with(b"QADI") {
            return Err(Error::CheckpointVersion {
                found: String::from_utf8_lossy(magic).into_owned(),
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
            });
        }
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let (body, tail) = blob.split_at(blob.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    let mut r = Reader { data: body, pos: MAGIC.len() };
    let v = r.vec()?;
    let t = r.f64()?;
    let tau = r.f64()?;
    let k = r.usize()?;
    let deriv = r.vec()?;
    let deriv_prev = if r.flag()? { Some(r.vec()?) } else { None };
    if deriv.len() != v.len() || deriv_prev.as_ref().is_some_and(|d| d.len() != v.len()) {
        return Err(Error::CorruptCheckpoint("inconsistent vector lengths".into()));
    }
    let adapting = r.flag()?;
    let steady_count = r.usize()?;
    let rng_seed = r.u64()?;
    let rng_word_pos = r.u128()?;
    let overflowed = r.flag()?;
    let count = r.usize()?;
    if count > body.len() / 40 {
        return Err(Error::CorruptCheckpoint(format!("series length {count} exceeds blob")));
    }
    let mut series = Vec::with_capacity(count);
    for _ in 0..count {
        series.push(SeriesPoint {
            k: r.usize()?,
            t: r.f64()?,
            tau: r.f64()?,
            max_v: r.f64()?,
            max_dvdt: r.f64()?,
        });
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok(RunState {
        step: StepState { v, t, tau, k, deriv, deriv_prev },
        adapting,
        steady_count,
        rng_seed,
        rng_word_pos,
        series,
        overflowed,
    })
}

pub fn save_file(state: &RunState, path: &Path) -> Result<()> {
    std::fs::write(path, save(state))?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<RunState> {
    load(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunState {
        RunState {
            step: StepState {
                v: vec![0.0, 0.25, f64::MIN_POSITIVE, 0.999],
                t: 0.125,
                tau: 9e-5,
                k: 42,
                deriv: vec![1.0, 2.0, 3.0, -0.0],
                deriv_prev: Some(vec![0.5, 1.5, 2.5, 1e-300]),
            },
            adapting: true,
            steady_count: 3,
            rng_seed: 0xdead_beef,
            rng_word_pos: 1 << 70,
            series: vec![SeriesPoint { k: 0, t: 0.0, tau: 9e-5, max_v: 0.0, max_dvdt: 1.0 }],
            overflowed: false,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        let back = load(&save(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.step.deriv[3].to_bits(), (-0.0f64).to_bits());
        let fresh = RunState { step: StepState { deriv_prev: None, ..s.step.clone() }, ..s };
        assert_eq!(load(&save(&fresh)).unwrap(), fresh);
    }

    #[test]
    fn truncation_is_corrupt() {
        let blob = save(&sample());
        for cut in [0, 3, 9, blob.len() / 2, blob.len() - 1] {
            assert!(matches!(load(&blob[..cut]), Err(Error::CorruptCheckpoint(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut blob = save(&sample());
        blob[20] ^= 0x10;
        assert!(matches!(load(&blob), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn other_version_is_rejected() {
        let mut blob = save(&sample());
        blob[4] = b'2';
        assert!(matches!(load(&blob), Err(Error::CheckpointVersion { .. })));
    }
}
