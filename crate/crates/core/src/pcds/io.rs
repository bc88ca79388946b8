use std::io::{Read, Write};

use super::{Stage1Row, Stage2Latent, Stage2Row};
use crate::artifact::{fmt_f64, Provenance};
use crate::error::{Error, Result};
use crate::units::{AgeGroup, Facility, FlowRate, GeometryFactor, Permeability, Pressure};

pub const STAGE1_COLUMNS: [&str; 6] =
    ["iop", "q_ah", "f_u", "evp", "age_group", "target_log10_ktm"];
pub const STAGE2_COLUMNS: [&str; 7] = [
    "predicted_log10_ktm",
    "iop_calibrated",
    "q_ah",
    "f_u",
    "evp",
    "age_years",
    "target_log10_g",
];
pub const STAGE2_LATENT_COLUMNS: [&str; 5] = ["c_trab", "iop_goldmann", "k_tm", "g", "archetype"];

pub(crate) fn write_table<W: Write>(
    mut w: W,
    provenance: Option<&Provenance>,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(w, "{}", p.comment_line())?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) struct Table {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    pub(crate) fn read<R: Read>(r: R, expected: &[&str]) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header != expected {
            return Err(Error::Schema(format!(
                "expected columns {expected:?}, found {header:?}"
            )));
        }
        let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Table { header, records })
    }

    pub(crate) fn len(&self) -> usize {
        self.records.len()
    }

    pub(crate) fn str(&self, row: usize, col: usize) -> &str {
        self.records[row].get(col).unwrap_or("").trim()
    }

    pub(crate) fn fail(&self, row: usize, col: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            row: row + 1,
            column: self.header[col].clone(),
            message: message.into(),
        }
    }

    pub(crate) fn f64(&self, row: usize, col: usize) -> Result<f64> {
        let s = self.str(row, col);
        let v: f64 = s
            .parse()
            .map_err(|_| self.fail(row, col, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.fail(row, col, "value is not finite"));
        }
        Ok(v)
    }

    pub(crate) fn opt_f64(&self, row: usize, col: usize) -> Result<Option<f64>> {
        if self.str(row, col).is_empty() {
            Ok(None)
        } else {
            self.f64(row, col).map(Some)
        }
    }
}

pub fn write_stage1_csv<W: Write>(
    w: W,
    rows: &[Stage1Row],
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_table(
        w,
        provenance,
        &STAGE1_COLUMNS,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.iop.value()),
                fmt_f64(r.q_ah.value()),
                fmt_f64(r.f_u.value()),
                fmt_f64(r.evp.value()),
                r.age_group.name().to_string(),
                fmt_f64(r.target_log10_ktm),
            ]
        }),
    )
}

pub fn read_stage1_csv<R: Read>(r: R) -> Result<Vec<Stage1Row>> {
    let t = Table::read(r, &STAGE1_COLUMNS)?;
    (0..t.len())
        .map(|i| {
            let age_group =
                AgeGroup::parse(t.str(i, 4)).ok_or_else(|| t.fail(i, 4, "unknown age group"))?;
            Ok(Stage1Row {
                iop: Pressure::new(t.f64(i, 0)?),
                q_ah: FlowRate::new(t.f64(i, 1)?),
                f_u: FlowRate::new(t.f64(i, 2)?),
                evp: Pressure::new(t.f64(i, 3)?),
                age_group,
                target_log10_ktm: t.f64(i, 5)?,
            })
        })
        .collect()
}

pub fn write_stage2_csv<W: Write>(
    w: W,
    rows: &[Stage2Row],
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_table(
        w,
        provenance,
        &STAGE2_COLUMNS,
        rows.iter().map(|r| {
            [
                r.predicted_log10_ktm,
                r.iop_calibrated.value(),
                r.q_ah.value(),
                r.f_u.value(),
                r.evp.value(),
                r.age_years,
                r.target_log10_g,
            ]
            .into_iter()
            .map(fmt_f64)
            .collect()
        }),
    )
}

pub fn read_stage2_csv<R: Read>(r: R) -> Result<Vec<Stage2Row>> {
    let t = Table::read(r, &STAGE2_COLUMNS)?;
    (0..t.len())
        .map(|i| {
            Ok(Stage2Row {
                predicted_log10_ktm: t.f64(i, 0)?,
                iop_calibrated: Pressure::new(t.f64(i, 1)?),
                q_ah: FlowRate::new(t.f64(i, 2)?),
                f_u: FlowRate::new(t.f64(i, 3)?),
                evp: Pressure::new(t.f64(i, 4)?),
                age_years: t.f64(i, 5)?,
                target_log10_g: t.f64(i, 6)?,
            })
        })
        .collect()
}

pub fn write_stage2_latent_csv<W: Write>(
    w: W,
    latent: &[Stage2Latent],
    provenance: Option<&Provenance>,
) -> Result<()> {
    write_table(
        w,
        provenance,
        &STAGE2_LATENT_COLUMNS,
        latent.iter().map(|l| {
            vec![
                fmt_f64(l.c_trab.value()),
                fmt_f64(l.iop_goldmann.value()),
                fmt_f64(l.k_tm.0),
                fmt_f64(l.g.0),
                l.archetype.clone(),
            ]
        }),
    )
}

pub fn read_stage2_latent_csv<R: Read>(r: R) -> Result<Vec<Stage2Latent>> {
    let t = Table::read(r, &STAGE2_LATENT_COLUMNS)?;
    (0..t.len())
        .map(|i| {
            Ok(Stage2Latent {
                c_trab: Facility::new(t.f64(i, 0)?),
                iop_goldmann: Pressure::new(t.f64(i, 1)?),
                k_tm: Permeability(t.f64(i, 2)?),
                g: GeometryFactor(t.f64(i, 3)?),
                archetype: t.str(i, 4).to_string(),
            })
        })
        .collect()
}
