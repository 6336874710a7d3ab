//! File formats.
//!
//! - Trajectory CSV: header `t,x1,...,xn`, one row per `t = 1..T`.
//! - Observation CSV: header `t,y1,...,yp`, rows for `t = 2..T`, with a JSON
//!   sidecar `{"x": [...], "C": [row-major], "n": .., "p": .., "T": ..}`.
//!
//! Numbers are written with 17 significant digits so that values round-trip.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Matrix, ObservedData, Trajectory, Vector};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn ser_matrix<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_rows(m).serialize(s)
}

pub fn ser_matrices<S: Serializer>(ms: &[Matrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    ms.iter().map(linalg::to_rows).collect::<Vec<_>>().serialize(s)
}

pub fn ser_vectors<S: Serializer>(vs: &[Vector], s: S) -> std::result::Result<S::Ok, S::Error> {
    vs.iter()
        .map(|v| v.iter().cloned().collect::<Vec<f64>>())
        .collect::<Vec<_>>()
        .serialize(s)
}

fn write_rows<W: Write>(out: W, prefix: char, first_t: usize, rows: &[Vector]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("{prefix}{i}")));
    w.write_record(&header)?;
    for (k, row) in rows.iter().enumerate() {
        let mut rec = vec![(first_t + k).to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R, prefix: char, first_t: usize) -> Result<Vec<Vector>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::Format(format!(
            "expected header `t,{prefix}1,...`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("{prefix}{i}") {
            return Err(Error::Format(format!("unexpected column `{name}`")));
        }
    }
    let dim = header.len() - 1;
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let t: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad time index `{}`", &rec[0])))?;
        if t != first_t + k {
            return Err(Error::Format(format!(
                "time index {t} out of sequence, expected {}",
                first_t + k
            )));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}` at t={t}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != dim {
            return Err(Error::Format(format!("row t={t} has {} values, expected {dim}", vals.len())));
        }
        rows.push(Vector::from_vec(vals));
    }
    Ok(rows)
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    write_rows(out, 'x', 1, traj.states())
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Trajectory> {
    Trajectory::new(read_rows(input, 'x', 1)?)
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_trajectory_csv(File::create(path)?, traj)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    read_trajectory_csv(File::open(path)?)
}

/// JSON sidecar accompanying an observation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSidecar {
    pub x: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

impl ObservationSidecar {
    pub fn from_data(data: &ObservedData) -> Self {
        Self {
            x: data.initial().iter().cloned().collect(),
            c: linalg::to_row_major(data.obs_matrix()),
            n: data.state_dim(),
            p: data.obs_dim(),
            horizon: data.horizon(),
        }
    }
}

pub fn write_observations_csv<W: Write>(out: W, data: &ObservedData) -> Result<()> {
    write_rows(out, 'y', 2, data.observations())
}

/// Rebuilds observed data from the CSV body and its sidecar, cross-checking sizes.
pub fn read_observed<R: Read>(csv_input: R, sidecar: &ObservationSidecar) -> Result<ObservedData> {
    let ys = read_rows(csv_input, 'y', 2)?;
    if ys.len() + 1 != sidecar.horizon {
        return Err(Error::Format(format!(
            "sidecar says T={} but CSV holds {} observations",
            sidecar.horizon,
            ys.len()
        )));
    }
    if sidecar.x.len() != sidecar.n {
        return Err(Error::Format(format!(
            "sidecar x has length {}, expected n={}",
            sidecar.x.len(),
            sidecar.n
        )));
    }
    if ys.first().map_or(false, |y| y.len() != sidecar.p) {
        return Err(Error::Format(format!(
            "CSV has {} observation columns, sidecar says p={}",
            ys[0].len(),
            sidecar.p
        )));
    }
    let c = linalg::from_row_major(sidecar.p, sidecar.n, &sidecar.c).ok_or_else(|| {
        Error::Format(format!(
            "sidecar C has {} entries, expected p*n={}",
            sidecar.c.len(),
            sidecar.p * sidecar.n
        ))
    })?;
    ObservedData::new(Vector::from_vec(sidecar.x.clone()), c, ys)
}

pub fn save_observed(csv_path: &Path, sidecar_path: &Path, data: &ObservedData) -> Result<()> {
    write_observations_csv(File::create(csv_path)?, data)?;
    let mut f = File::create(sidecar_path)?;
    serde_json::to_writer_pretty(&mut f, &ObservationSidecar::from_data(data))?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_observed(csv_path: &Path, sidecar_path: &Path) -> Result<ObservedData> {
    let sidecar: ObservationSidecar = serde_json::from_reader(File::open(sidecar_path)?)?;
    read_observed(File::open(csv_path)?, &sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_full, simulate_observed};

    #[test]
    fn trajectory_csv_layout() {
        let tr = simulate_full(
            &Matrix::from_element(1, 1, 0.5),
            &Vector::from_element(1, 1.0),
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1");
        assert_eq!(lines[2], "2,5.0000000000000000e-1");
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), tr);
    }

    #[test]
    fn observed_roundtrip_with_sidecar() {
        let a = Matrix::from_row_slice(2, 2, &[0.3, -0.7, 0.1, 0.9]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 1.0 / 3.0]);
        let d = simulate_observed(&a, &c, &Vector::from_row_slice(&[0.1, 2.0]), 5).unwrap();
        let mut buf = Vec::new();
        write_observations_csv(&mut buf, &d).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,y1\n2,"));
        let side = ObservationSidecar::from_data(&d);
        assert_eq!(read_observed(buf.as_slice(), &side).unwrap(), d);

        let mut wrong = side.clone();
        wrong.horizon = 9;
        assert!(read_observed(buf.as_slice(), &wrong).is_err());
    }

    #[test]
    fn rejects_out_of_sequence_rows() {
        let text = "t,x1\n1,1.0\n3,2.0\n";
        assert!(matches!(read_trajectory_csv(text.as_bytes()), Err(Error::Format(_))));
        let text = "t,z1\n1,1.0\n2,2.0\n";
        assert!(read_trajectory_csv(text.as_bytes()).is_err());
    }
}
