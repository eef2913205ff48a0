//! File formats: CSV time series, JSON matrices and mode lists, and the
//! binary joint-state dump.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! file is a pure function of the values it holds.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use collapsar_core::bath::{BathConfig, JointState};
use collapsar_core::kernel::ModeDecomposition;
use collapsar_core::quantum::MixedState;
use collapsar_core::C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const JOINT_FORMAT: &str = "collapsar-joint-v1";

/// Buffered CSV writer with a fixed column count.
pub struct CsvWriter {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[String]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter { out, columns: header.len() })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        if values.len() != self.columns {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("row has {} values for {} columns", values.len(), self.columns),
            ));
        }
        let mut first = true;
        for v in values {
            if !first {
                self.out.write_all(b",")?;
            }
            first = false;
            write!(self.out, "{}", fmt_f64(*v))?;
        }
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Column names `<A_0>,...`.
pub fn expectation_columns(channels: usize) -> Vec<String> {
    (0..channels).map(|k| format!("<A_{k}>")).collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// `{channels, omega, d_omega, kappa}` with `kappa[m][k][l]`.
pub fn modes_json(md: &ModeDecomposition) -> Value {
    let d = md.channels();
    let kappa: Vec<Vec<Vec<f64>>> = (0..md.modes())
        .map(|m| (0..d).map(|k| (0..d).map(|l| md.coupling(m, k, l)).collect()).collect())
        .collect();
    json!({
        "channels": d,
        "omega": md.omegas(),
        "d_omega": md.d_omega(),
        "kappa": kappa,
    })
}

/// Inverse of [`modes_json`].
pub fn modes_from_json(v: &Value) -> Result<ModeDecomposition, String> {
    #[derive(Deserialize)]
    struct Raw {
        channels: usize,
        omega: Vec<f64>,
        d_omega: Option<f64>,
        kappa: Vec<Vec<Vec<f64>>>,
    }
    let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| e.to_string())?;
    let flat = raw.kappa.into_iter().flatten().flatten().collect();
    ModeDecomposition::new(raw.channels, raw.omega, flat, raw.d_omega).map_err(|e| e.to_string())
}

/// `{re: [[..]], im: [[..]]}` for a density matrix.
pub fn density_json(rho: &MixedState) -> Value {
    let n = rho.dim();
    let part = |f: fn(C64) -> f64| -> Vec<Vec<f64>> { (0..n).map(|i| (0..n).map(|j| f(rho.get(i, j))).collect()).collect() };
    json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
}

/// Column names `rho_<i><j>_re,rho_<i><j>_im` over the upper triangle.
pub fn density_columns(dim: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            out.push(format!("rho_{i}{j}_re"));
            out.push(format!("rho_{i}{j}_im"));
        }
    }
    out
}

pub fn density_row(rho: &MixedState) -> Vec<f64> {
    let n = rho.dim();
    let mut out = Vec::with_capacity(n * (n + 1));
    for i in 0..n {
        for j in i..n {
            let z = rho.get(i, j);
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHeader {
    pub format: String,
    pub dim_sys: usize,
    pub oscillators: usize,
    pub n_max: usize,
    pub bath_dim: usize,
    pub time: f64,
    /// Human-readable description of the amplitude order.
    pub layout: String,
    pub encoding: String,
}

/// One JSON header line, then `dim_sys * bath_dim` amplitudes as
/// little-endian `f64` pairs `(re, im)`.
pub fn write_joint_state(path: &Path, psi: &JointState, bc: &BathConfig) -> io::Result<()> {
    let header = JointHeader {
        format: JOINT_FORMAT.into(),
        dim_sys: psi.dim_sys(),
        oscillators: bc.oscillators(),
        n_max: bc.n_max(),
        bath_dim: psi.bath_dim(),
        time: psi.time(),
        layout: "index s*bath_dim+b; oscillator 0 is the most significant base-n_max digit of b; \
                 oscillator 2p is x+ and 2p+1 is x- of pair p"
            .into(),
        encoding: "f64 little-endian (re, im) pairs".into(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for a in psi.amplitudes() {
        out.write_all(&a.re.to_le_bytes())?;
        out.write_all(&a.im.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_joint_state(path: &Path) -> io::Result<(JointHeader, Vec<C64>)> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: JointHeader = serde_json::from_str(line.trim_end()).map_err(|e| bad(e.to_string()))?;
    if header.format != JOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", header.format)));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let count = header.dim_sys * header.bath_dim;
    if bytes.len() != 16 * count {
        return Err(bad(format!("expected {} bytes of amplitudes, got {}", 16 * count, bytes.len())));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    let amps = bytes.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
    Ok((header, amps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use collapsar_core::quantum::PureState;

    #[test]
    fn number_formatting_round_trips() {
        for v in [0.0, 1.0, -0.25, 1e-3, 3.0e-17, 123456.75, 2.5e9, -7.125e-300] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let mut w = CsvWriter::create(&p, &["t".into(), "y".into()]).unwrap();
        w.row(&[0.0, 1.0]).unwrap();
        assert!(w.row(&[0.0]).is_err());
        w.finish().unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,y\n0,1\n");
    }

    #[test]
    fn modes_round_trip() {
        let md = ModeDecomposition::new(2, vec![0.5, 1.5], vec![1.0, 0.2, 0.2, 0.7, 0.3, 0.0, 0.0, 0.4], Some(1.0)).unwrap();
        let back = modes_from_json(&modes_json(&md)).unwrap();
        assert_eq!(back, md);
    }

    #[test]
    fn joint_state_round_trip() {
        let md = ModeDecomposition::single(0.5, 1.0).unwrap();
        let bc = BathConfig::new(md, 3).unwrap();
        let psi0 = PureState::from_real(&[0.6, 0.8]).unwrap();
        let psi = JointState::vacuum(&psi0, &bc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("joint.bin");
        write_joint_state(&p, &psi, &bc).unwrap();
        let (h, amps) = read_joint_state(&p).unwrap();
        assert_eq!((h.dim_sys, h.oscillators, h.n_max, h.bath_dim), (2, 2, 3, 9));
        assert_eq!(amps, psi.amplitudes());
        let back = JointState::from_amplitudes(&bc, h.dim_sys, h.time, amps).unwrap();
        assert_eq!(back.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn density_columns_match_rows() {
        let rho = MixedState::maximally_mixed(3);
        assert_eq!(density_columns(3).len(), density_row(&rho).len());
        assert_eq!(density_json(&rho)["re"][1][1], 1.0 / 3.0);
    }
}
