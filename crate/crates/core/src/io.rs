//! Dataset ingestion and output file formats.
//!
//! Binary matrices use a fixed little-endian layout:
//!
//! ```text
//! b"HWAV1\0" | rows: u64 | cols: u64 | rows*cols f64, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::niche::{Categorical, SpatialDataset};

pub const MATRIX_MAGIC: &[u8; 6] = b"HWAV1\0";
const MATRIX_HEADER_LEN: usize = 6 + 8 + 8;

pub const CELLS_HEADER: [&str; 7] = ["cell_id", "x", "y", "cell_type", "subclass", "supertype", "condition"];
pub const SPARSE_HEADER: [&str; 3] = ["cell_id", "gene", "count"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: u64, column: usize, message: String },

    #[error("expression references unknown cell_id {id:?}")]
    MissingCell { id: String },

    #[error("cell_id {id:?} appears more than once in {path}")]
    DuplicateCell { id: String, path: PathBuf },

    #[error("cell_id {id:?} has no row in the dense expression file")]
    MissingExpression { id: String },

    #[error("bad matrix file: {0}")]
    Format(String),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_owned(), source }
    }

    fn parse(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_owned(), line, column, message: message.into() }
    }
}

/// Expression encodings accepted by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpressionFormat {
    /// `cell_id` followed by one column per gene.
    Dense,
    /// `cell_id,gene,count` triplets; absent entries are zero.
    Sparse,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> IoError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => IoError::io(path, e),
        csv::ErrorKind::Utf8 { err, .. } => {
            IoError::parse(path, line, err.field() + 1, "invalid UTF-8")
        }
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => IoError::parse(
            path,
            line,
            (len as usize).min(expected_len as usize) + 1,
            format!("expected {expected_len} fields, found {len}"),
        ),
        other => IoError::parse(path, line, 0, format!("{other:?}")),
    }
}

fn read_header(path: &Path, reader: &mut csv::Reader<fs::File>) -> Result<Vec<String>, IoError> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(header.iter().map(|h| h.trim().to_owned()).collect())
}

fn parse_f64(path: &Path, line: u64, column: usize, field: &str) -> Result<f64, IoError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| IoError::parse(path, line, column, format!("{field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(IoError::parse(path, line, column, format!("{field:?} is not finite")));
    }
    Ok(v)
}

fn parse_count(path: &Path, line: u64, column: usize, field: &str) -> Result<f64, IoError> {
    let v = parse_f64(path, line, column, field)?;
    if v < 0.0 {
        return Err(IoError::parse(path, line, column, format!("count {field:?} is negative")));
    }
    Ok(v)
}

struct CellTable {
    ids: Vec<String>,
    coords: Array2<f64>,
    labels: [Vec<String>; 4],
}

fn read_cells(path: &Path) -> Result<CellTable, IoError> {
    let mut reader = csv_reader(path)?;
    let header = read_header(path, &mut reader)?;
    if header != CELLS_HEADER {
        return Err(IoError::parse(path, 1, 1, format!("header must be {}", CELLS_HEADER.join(","))));
    }
    let mut ids = Vec::new();
    let mut xy = Vec::new();
    let mut labels: [Vec<String>; 4] = Default::default();
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim().to_owned();
        if id.is_empty() {
            return Err(IoError::parse(path, line, 1, "empty cell_id"));
        }
        if seen.insert(id.clone(), ids.len()).is_some() {
            return Err(IoError::DuplicateCell { id, path: path.to_owned() });
        }
        xy.push(parse_f64(path, line, 2, &record[1])?);
        xy.push(parse_f64(path, line, 3, &record[2])?);
        for (k, column) in labels.iter_mut().enumerate() {
            column.push(record[3 + k].trim().to_owned());
        }
        ids.push(id);
    }
    let coords = Array2::from_shape_vec((ids.len(), 2), xy).expect("two coordinates per cell");
    Ok(CellTable { ids, coords, labels })
}

/// Reads the header row to decide between the dense and sparse encodings.
pub fn detect_expression_format(path: &Path) -> Result<ExpressionFormat, IoError> {
    let mut reader = csv_reader(path)?;
    let header = read_header(path, &mut reader)?;
    if header.first().map(String::as_str) != Some("cell_id") {
        return Err(IoError::parse(path, 1, 1, "first column must be cell_id"));
    }
    Ok(if header == SPARSE_HEADER { ExpressionFormat::Sparse } else { ExpressionFormat::Dense })
}

fn read_dense(path: &Path, index: &HashMap<String, usize>) -> Result<(Vec<String>, Array2<f64>), IoError> {
    let mut reader = csv_reader(path)?;
    let header = read_header(path, &mut reader)?;
    let genes: Vec<String> = header[1..].to_vec();
    if genes.is_empty() {
        return Err(IoError::parse(path, 1, 2, "no gene columns"));
    }
    if let Some(pos) = (1..header.len()).find(|&i| header[..i].contains(&header[i])) {
        return Err(IoError::parse(path, 1, pos + 1, format!("duplicate gene column {:?}", header[pos])));
    }
    let mut expression = Array2::zeros((index.len(), genes.len()));
    let mut filled = vec![false; index.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim();
        let &row = index.get(id).ok_or_else(|| IoError::MissingCell { id: id.to_owned() })?;
        if std::mem::replace(&mut filled[row], true) {
            return Err(IoError::DuplicateCell { id: id.to_owned(), path: path.to_owned() });
        }
        for (g, field) in record.iter().skip(1).enumerate() {
            expression[[row, g]] = parse_count(path, line, g + 2, field)?;
        }
    }
    if let Some(row) = filled.iter().position(|f| !f) {
        let id = index.iter().find(|(_, &r)| r == row).map(|(id, _)| id.clone()).unwrap_or_default();
        return Err(IoError::MissingExpression { id });
    }
    Ok((genes, expression))
}

fn read_sparse(path: &Path, index: &HashMap<String, usize>) -> Result<(Vec<String>, Array2<f64>), IoError> {
    let mut reader = csv_reader(path)?;
    read_header(path, &mut reader)?;
    let mut genes: Vec<String> = Vec::new();
    let mut gene_index: HashMap<String, usize> = HashMap::new();
    let mut entries: HashMap<(usize, usize), u64> = HashMap::new();
    let mut triplets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim();
        let &row = index.get(id).ok_or_else(|| IoError::MissingCell { id: id.to_owned() })?;
        let gene = record[1].trim();
        if gene.is_empty() {
            return Err(IoError::parse(path, line, 2, "empty gene name"));
        }
        let g = *gene_index.entry(gene.to_owned()).or_insert_with(|| {
            genes.push(gene.to_owned());
            genes.len() - 1
        });
        let count = parse_count(path, line, 3, &record[2])?;
        if let Some(first) = entries.insert((row, g), line) {
            return Err(IoError::parse(
                path,
                line,
                2,
                format!("entry ({id}, {gene}) repeats line {first}"),
            ));
        }
        triplets.push((row, g, count));
    }
    if genes.is_empty() {
        return Err(IoError::parse(path, 2, 1, "no expression entries"));
    }
    let mut expression = Array2::zeros((index.len(), genes.len()));
    for (r, g, c) in triplets {
        expression[[r, g]] = c;
    }
    Ok((genes, expression))
}

/// Loads cells and expression into a [`SpatialDataset`], aligned to the
/// cell file's row order. Label vocabularies are the sorted distinct values.
/// Sparse files list genes in order of first appearance.
pub fn ingest(cells_path: &Path, expression_path: &Path) -> Result<SpatialDataset, IoError> {
    let cells = read_cells(cells_path)?;
    let index: HashMap<String, usize> = cells.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let (genes, expression) = match detect_expression_format(expression_path)? {
        ExpressionFormat::Dense => read_dense(expression_path, &index)?,
        ExpressionFormat::Sparse => read_sparse(expression_path, &index)?,
    };
    let [cell_types, subclasses, supertypes, condition] = cells.labels;
    Ok(SpatialDataset {
        cell_ids: cells.ids,
        coords: cells.coords,
        genes,
        expression,
        cell_types: Categorical::from_labels(&cell_types),
        subclasses: Categorical::from_labels(&subclasses),
        supertypes: Categorical::from_labels(&supertypes),
        condition: Categorical::from_labels(&condition),
    })
}

pub fn encode_matrix(matrix: ArrayView2<'_, f64>) -> Vec<u8> {
    let (rows, cols) = matrix.dim();
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in matrix.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>, IoError> {
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(IoError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..6] != MATRIX_MAGIC {
        return Err(IoError::Format(format!("magic bytes {:?} do not match HWAV1", &bytes[..6])));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(6), word(14));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(MATRIX_HEADER_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(IoError::Format(format!(
            "{rows}x{cols} matrix needs {} bytes, file has {}",
            expected.map_or("too many".to_owned(), |e| e.to_string()),
            bytes.len()
        )));
    }
    let values = bytes[MATRIX_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows as usize, cols as usize), values).expect("length checked"))
}

pub fn write_matrix(path: &Path, matrix: ArrayView2<'_, f64>) -> Result<(), IoError> {
    fs::write(path, encode_matrix(matrix)).map_err(|e| IoError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, IoError> {
    decode_matrix(&fs::read(path).map_err(|e| IoError::io(path, e))?)
}

/// Writes `id_header,headers...` then one row per matrix row. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_labeled_csv<S: AsRef<str>>(
    path: &Path,
    id_header: &str,
    ids: &[S],
    headers: &[String],
    matrix: ArrayView2<'_, f64>,
) -> Result<(), IoError> {
    assert_eq!(ids.len(), matrix.nrows(), "one id per row");
    assert_eq!(headers.len(), matrix.ncols(), "one header per column");
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| csv_error(path, e);
    writer.write_field(id_header).map_err(wrap)?;
    writer.write_record(headers).map_err(wrap)?;
    let mut buf = Vec::with_capacity(matrix.ncols() + 1);
    for (id, row) in ids.iter().zip(matrix.rows()) {
        buf.clear();
        buf.push(id.as_ref().to_owned());
        buf.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&buf).map_err(wrap)?;
    }
    writer.flush().map_err(|e| IoError::io(path, e))
}

/// Writes arbitrary string rows under a header.
pub fn write_rows<I, R, S>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| IoError::io(path, e))
}

/// Writes the dataset back out as a cells file and a dense expression file.
pub fn write_dataset(dataset: &SpatialDataset, cells_path: &Path, expression_path: &Path) -> Result<(), IoError> {
    write_rows(
        cells_path,
        &CELLS_HEADER,
        (0..dataset.n_cells()).map(|i| {
            [
                dataset.cell_ids[i].clone(),
                dataset.coords[[i, 0]].to_string(),
                dataset.coords[[i, 1]].to_string(),
                dataset.cell_types.label(i).to_owned(),
                dataset.subclasses.label(i).to_owned(),
                dataset.supertypes.label(i).to_owned(),
                dataset.condition.label(i).to_owned(),
            ]
        }),
    )?;
    write_labeled_csv(expression_path, "cell_id", &dataset.cell_ids, &dataset.genes, dataset.expression.view())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| IoError::io(path, e))
}
