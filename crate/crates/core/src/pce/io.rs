//! Versioned on-disk record for expansions.
//!
//! A record is a UTF-8 header of `key value...` lines terminated by the line
//! `end-header`, followed by one or more coefficient tables stored as
//! little-endian f64 in term-major order (all outputs of term 0, then term 1,
//! and so on). Unknown header keys are preserved as `extra` lines so that
//! [`crate::multifidelity`] can append its provenance block.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use super::{BasisFamily, MultiIndex, MultiIndexSet, PCSurrogate, PceError, Univariate};

pub const MAGIC: &str = "# ampc-eki polynomial chaos record";
pub const FORMAT_VERSION: u32 = 1;

/// Header fields shared by every record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub kind: String,
    pub basis: BasisFamily,
    pub set: MultiIndexSet,
    pub outputs: usize,
    /// Table names, in payload order, with their term counts.
    pub tables: Vec<(String, usize)>,
    pub extra: Vec<String>,
}

pub fn write_header<W: Write>(w: &mut W, h: &RecordHeader) -> Result<(), PceError> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "version {FORMAT_VERSION}")?;
    writeln!(w, "kind {}", h.kind)?;
    writeln!(w, "dimension {}", h.set.dim())?;
    writeln!(w, "degree {}", h.set.degree())?;
    writeln!(w, "terms {}", h.set.len())?;
    writeln!(w, "outputs {}", h.outputs)?;
    let labels: Vec<String> = h.basis.families().iter().map(|f| f.label()).collect();
    writeln!(w, "basis {}", labels.join(" "))?;
    for (name, terms) in &h.tables {
        writeln!(w, "table {name} {terms}")?;
    }
    for alpha in h.set.iter() {
        let e: Vec<String> = alpha.exponents().iter().map(|a| a.to_string()).collect();
        writeln!(w, "index {}", e.join(" "))?;
    }
    for line in &h.extra {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end-header")?;
    Ok(())
}

pub fn write_table<W: Write>(w: &mut W, table: &DMatrix<f64>) -> Result<(), PceError> {
    for i in 0..table.nrows() {
        for k in 0..table.ncols() {
            w.write_all(&table[(i, k)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_table<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>, PceError> {
    let mut buf = vec![0u8; rows * cols * 8];
    r.read_exact(&mut buf).map_err(|e| PceError::Format(format!("truncated coefficient table: {e}")))?;
    let mut t = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for k in 0..cols {
            let off = (i * cols + k) * 8;
            t[(i, k)] = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        }
    }
    Ok(t)
}

fn field<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, PceError> {
    value.trim().parse().map_err(|_| PceError::Format(format!("bad value for {key}: {value:?}")))
}

pub fn read_header<R: BufRead>(r: &mut R) -> Result<RecordHeader, PceError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(PceError::Format("missing record magic line".into()));
    }
    let (mut version, mut kind, mut dim, mut degree, mut terms, mut outputs) = (None, None, None, None, None, None);
    let mut basis = None;
    let mut tables = Vec::new();
    let mut indices = Vec::new();
    let mut extra = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(PceError::Format("header not terminated".into()));
        }
        let l = line.trim_end_matches(['\n', '\r']);
        if l == "end-header" {
            break;
        }
        let (key, rest) = l.split_once(' ').unwrap_or((l, ""));
        match key {
            "version" => version = Some(field::<u32>(rest, key)?),
            "kind" => kind = Some(rest.to_string()),
            "dimension" => dim = Some(field::<usize>(rest, key)?),
            "degree" => degree = Some(field::<usize>(rest, key)?),
            "terms" => terms = Some(field::<usize>(rest, key)?),
            "outputs" => outputs = Some(field::<usize>(rest, key)?),
            "basis" => {
                let fams = rest
                    .split_whitespace()
                    .map(|s| Univariate::parse_label(s).ok_or_else(|| PceError::Format(format!("unknown basis {s}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                basis = Some(BasisFamily::new(fams));
            }
            "table" => {
                let (name, n) = rest.split_once(' ').ok_or_else(|| PceError::Format("bad table line".into()))?;
                tables.push((name.to_string(), field::<usize>(n, key)?));
            }
            "index" => {
                let e = rest.split_whitespace().map(|s| field::<u32>(s, key)).collect::<Result<Vec<_>, _>>()?;
                indices.push(MultiIndex::new(e));
            }
            _ => extra.push(l.to_string()),
        }
    }
    let missing = |k: &str| PceError::Format(format!("missing header field {k}"));
    let version = version.ok_or_else(|| missing("version"))?;
    if version != FORMAT_VERSION {
        return Err(PceError::Format(format!("unsupported version {version}")));
    }
    let dim = dim.ok_or_else(|| missing("dimension"))?;
    let degree = degree.ok_or_else(|| missing("degree"))?;
    let basis = basis.ok_or_else(|| missing("basis"))?;
    let set = MultiIndexSet::total_degree(dim, degree)?;
    if terms != Some(set.len()) || indices.as_slice() != set.indices() {
        return Err(PceError::Format("index list does not match the total-degree set".into()));
    }
    if basis.dim() != dim {
        return Err(PceError::Format("basis list length differs from dimension".into()));
    }
    Ok(RecordHeader {
        kind: kind.ok_or_else(|| missing("kind"))?,
        basis,
        set,
        outputs: outputs.ok_or_else(|| missing("outputs"))?,
        tables,
        extra,
    })
}

pub fn write_surrogate<W: Write>(w: &mut W, s: &PCSurrogate) -> Result<(), PceError> {
    let header = RecordHeader {
        kind: "pc-surrogate".into(),
        basis: s.basis().clone(),
        set: s.index_set().clone(),
        outputs: s.outputs(),
        tables: vec![("coefficients".into(), s.index_set().len())],
        extra: Vec::new(),
    };
    write_header(w, &header)?;
    write_table(w, s.coeffs())
}

pub fn read_surrogate<R: BufRead>(r: &mut R) -> Result<PCSurrogate, PceError> {
    let h = read_header(r)?;
    let terms = h.tables.first().map(|t| t.1).ok_or_else(|| PceError::Format("no coefficient table".into()))?;
    if terms != h.set.len() {
        return Err(PceError::Format("first table must cover the full index set".into()));
    }
    let coeffs = read_table(r, terms, h.outputs)?;
    PCSurrogate::new(h.basis, h.set, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let set = MultiIndexSet::total_degree(2, 2).unwrap();
        let basis = BasisFamily::new(vec![Univariate::Hermite, Univariate::Legendre { lo: -0.5, hi: 2.0 }]);
        let coeffs = DMatrix::from_fn(6, 3, |i, k| (i as f64 + 0.1) * (k as f64 - 1.3) / 7.0);
        let s = PCSurrogate::new(basis, set, coeffs).unwrap();
        let mut buf = Vec::new();
        write_surrogate(&mut buf, &s).unwrap();
        let text_end = buf.windows(11).position(|w| w == b"end-header\n").unwrap();
        assert!(std::str::from_utf8(&buf[..text_end]).unwrap().contains("basis hermite legendre:"));
        let back = read_surrogate(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_truncated_payload_and_bad_magic() {
        let s = PCSurrogate::zeros(BasisFamily::hermite(1), MultiIndexSet::total_degree(1, 2).unwrap(), 2).unwrap();
        let mut buf = Vec::new();
        write_surrogate(&mut buf, &s).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_surrogate(&mut buf.as_slice()), Err(PceError::Format(_))));
        assert!(matches!(read_surrogate(&mut b"hello\n".as_slice()), Err(PceError::Format(_))));
    }
}
