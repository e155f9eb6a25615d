//! File formats: dataset and trace CSVs, binary weights.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the one written.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::alm::TraceRow;
use crate::baseline::EpochRow;
use crate::error::{Error, Result};
use crate::net::{Dataset, NetworkSpec, Weights};

pub const TRACE_HEADER: [&str; 8] = ["k", "inner_iters", "f", "feas_inf", "grad_inf", "beta", "eps_k", "wall_ms"];
pub const EPOCH_HEADER: [&str; 4] = ["epoch", "train_mse", "test_mse", "wall_ms"];

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ALMW";
pub const WEIGHTS_VERSION: u32 = 1;

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Header `a_1..a_{d0},b_1..b_{dout}`, one sample per row.
pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut out = csv_writer(w);
    let (d0, dout) = (data.inputs.nrows(), data.targets.nrows());
    let header: Vec<String> = (1..=d0).map(|i| format!("a_{i}")).chain((1..=dout).map(|i| format!("b_{i}"))).collect();
    out.write_record(&header)?;
    let mut row = Vec::with_capacity(d0 + dout);
    for l in 0..data.len() {
        row.clear();
        row.extend(data.inputs.column(l).iter().map(|v| v.to_string()));
        row.extend(data.targets.column(l).iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset; the split between inputs and targets comes from the
/// header. With `spec`, the dimensions are checked against it.
pub fn read_dataset<R: Read>(r: R, spec: Option<&NetworkSpec>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    let d0 = header.iter().take_while(|h| h.starts_with("a_")).count();
    let dout = header.len() - d0;
    for (i, h) in header.iter().enumerate() {
        let expected = if i < d0 { format!("a_{}", i + 1) } else { format!("b_{}", i - d0 + 1) };
        if h != expected {
            return Err(Error::Dataset(format!("header column {} is {h:?}, expected {expected:?}", i + 1)));
        }
    }
    if d0 == 0 || dout == 0 {
        return Err(Error::Dataset(format!("header has {d0} input and {dout} target columns")));
    }
    if let Some(spec) = spec {
        if d0 != spec.input_dim() || dout != spec.output_dim() {
            return Err(Error::Dataset(format!(
                "dataset has {d0} inputs and {dout} targets, network expects {} and {}",
                spec.input_dim(),
                spec.output_dim()
            )));
        }
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d0 + dout {
            return Err(Error::Dataset(format!("row {} has {} fields, expected {}", line + 1, rec.len(), d0 + dout)));
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Dataset(format!("row {} column {}: {field:?} is not a number", line + 1, i + 1)))?;
            if i < d0 {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
    }
    let m = inputs.len() / d0;
    if m == 0 {
        return Err(Error::Dataset("dataset has no rows".into()));
    }
    Dataset::new(DMatrix::from_vec(d0, m, inputs), DMatrix::from_vec(dout, m, targets))
}

pub fn write_trace<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            r.inner_iters.to_string(),
            r.f.to_string(),
            r.feas_inf.to_string(),
            r.grad_inf.to_string(),
            r.beta.to_string(),
            r.eps_k.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(TRACE_HEADER) {
        return Err(Error::Dataset(format!("unexpected trace header {:?}", rdr.headers()?)));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_epochs<W: Write>(w: W, rows: &[EpochRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(EPOCH_HEADER)?;
    for r in rows {
        out.write_record([r.epoch.to_string(), r.train_mse.to_string(), r.test_mse.to_string(), r.wall_ms.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `ALMW`, version, layer count, then per layer rows, cols and the entries
/// row-major; integers are little-endian `u32`, entries little-endian `f64`.
pub fn write_weights<W: Write>(mut w: W, weights: &Weights) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(weights.layers.len())?.to_le_bytes())?;
    for l in &weights.layers {
        w.write_all(&to_u32(l.nrows())?.to_le_bytes())?;
        w.write_all(&to_u32(l.ncols())?.to_le_bytes())?;
        for r in 0..l.nrows() {
            for c in 0..l.ncols() {
                w.write_all(&l[(r, c)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Config(format!("dimension {n} does not fit the weights format")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut r: R) -> Result<Weights> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Dataset("not a weights file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Dataset(format!("unsupported weights version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut m = DMatrix::zeros(rows, cols);
        let mut b = [0u8; 8];
        for i in 0..rows {
            for j in 0..cols {
                r.read_exact(&mut b)?;
                m[(i, j)] = f64::from_le_bytes(b);
            }
        }
        layers.push(m);
    }
    Ok(Weights { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new(
            DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1e-300, 3.0, 0.0, 7.25]),
            DMatrix::from_row_slice(1, 3, &[1.0 / 3.0, -0.0, 5e10]),
        )
        .unwrap()
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a_1,a_2,b_1\n"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_dataset(&buf[..], None).unwrap(), sample());
    }

    #[test]
    fn dataset_checks_against_spec() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sample()).unwrap();
        let spec = NetworkSpec::new(vec![3, 2, 1], vec![crate::Activation::Tanh; 2], 3, 0.1).unwrap();
        assert!(matches!(read_dataset(&buf[..], Some(&spec)), Err(Error::Dataset(_))));
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(read_dataset("a_1,c_1\n1,2\n".as_bytes(), None).is_err());
        assert!(read_dataset("a_1,b_1\n1,x\n".as_bytes(), None).is_err());
        assert!(read_dataset("a_1,b_1\n".as_bytes(), None).is_err());
    }

    #[test]
    fn weights_layout() {
        let w = Weights { layers: vec![DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])] };
        let mut buf = Vec::new();
        write_weights(&mut buf, &w).unwrap();
        assert_eq!(&buf[..4], b"ALMW");
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 6 * 8);
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        // row-major: second stored entry is W[0,1]
        assert_eq!(&buf[28..36], &2.0f64.to_le_bytes());
        assert_eq!(read_weights(&buf[..]).unwrap(), w);
        assert!(read_weights(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn trace_roundtrip_is_exact() {
        let rows = vec![TraceRow { k: 0, inner_iters: 3, f: 0.1 + 0.2, feas_inf: 1e-9, grad_inf: 2.5e-3, beta: 1.0 / 7.0, eps_k: 0.1, wall_ms: 0.0 }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("k,inner_iters,f,feas_inf,grad_inf,beta,eps_k,wall_ms\n"));
        assert_eq!(read_trace(&buf[..]).unwrap(), rows);
    }
}
