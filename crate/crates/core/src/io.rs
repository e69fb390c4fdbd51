//! File formats: dense delimited tables, MatrixMarket coordinate files,
//! label tables, embeddings, subspace specs and reports.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::{ExpressionMatrix, LabelSet, Orientation};
use crate::pipeline::PipelineReport;
use crate::reduce::EmbeddingBlock;
use crate::subspace::SubspaceSpec;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Reads a delimited table whose first row and first column hold
/// identifiers. The result is always cells x genes.
pub fn load_dense(path: &Path, orientation: Orientation, delimiter: u8) -> Result<ExpressionMatrix> {
    read_dense(open(path)?, path, orientation, delimiter)
}

fn read_dense<R: std::io::Read>(
    source: R,
    path: &Path,
    orientation: Orientation,
    delimiter: u8,
) -> Result<ExpressionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(Error::parse(path, 1, "file is empty")),
    };
    let col_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let width = header.len();
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        row_ids.push(record[0].to_owned());
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, line, format!("'{field}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
    }
    let values = Array2::from_shape_vec((row_ids.len(), col_ids.len()), values)
        .expect("row widths checked");
    let m = ExpressionMatrix::new(values, row_ids, col_ids)?;
    Ok(match orientation {
        Orientation::CellsInRows => m,
        Orientation::GenesInRows => m.transpose(),
    })
}

/// Writes cells in rows with a corner label `cell`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_dense(m: &ExpressionMatrix, path: &Path, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(create(path)?);
    let mut header = vec!["cell".to_owned()];
    header.extend(m.gene_ids().iter().cloned());
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (id, row) in m.cell_ids().iter().zip(m.values().outer_iter()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.clone());
        rec.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Newline-delimited identifiers; only the first tab-separated field of
/// each line is used, blank lines are skipped.
pub fn load_ids(path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.split('\t').next().unwrap_or("").trim();
        if !id.is_empty() {
            ids.push(id.to_owned());
        }
    }
    Ok(ids)
}

/// MatrixMarket coordinate file (1-indexed) with rows = cells.
pub fn load_matrix_market(path: &Path, cell_ids_path: &Path, gene_ids_path: &Path) -> Result<ExpressionMatrix> {
    load_matrix_market_oriented(path, cell_ids_path, gene_ids_path, Orientation::CellsInRows)
}

/// MatrixMarket loader with an explicit orientation; `GenesInRows` is the
/// layout of 10x-style archives. Repeated coordinates are summed.
pub fn load_matrix_market_oriented(
    path: &Path,
    cell_ids_path: &Path,
    gene_ids_path: &Path,
    orientation: Orientation,
) -> Result<ExpressionMatrix> {
    let cell_ids = load_ids(cell_ids_path)?;
    let gene_ids = load_ids(gene_ids_path)?;
    let mut lines = open(path)?.lines().enumerate();
    let mut pattern = false;
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut values: Option<Array2<f64>> = None;
    let mut seen = 0usize;

    for (idx, line) in &mut lines {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if idx == 0 && trimmed.starts_with("%%MatrixMarket") {
            let lower = trimmed.to_ascii_lowercase();
            let fields: Vec<&str> = lower.split_whitespace().collect();
            if fields.len() < 5 || fields[1] != "matrix" || fields[2] != "coordinate" {
                return Err(Error::parse(path, lineno, "only coordinate matrices are supported"));
            }
            if fields[4] != "general" {
                return Err(Error::parse(path, lineno, "only general (non-symmetric) matrices are supported"));
            }
            match fields[3] {
                "real" | "integer" | "double" => {}
                "pattern" => pattern = true,
                other => {
                    return Err(Error::parse(path, lineno, format!("unsupported field type '{other}'")))
                }
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, lineno, format!("'{s}' is not an index")))
        };
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(Error::parse(path, lineno, "expected 'rows cols entries'"));
                }
                let (r, c, nnz) = (parse_usize(fields[0])?, parse_usize(fields[1])?, parse_usize(fields[2])?);
                let (cells, genes) = match orientation {
                    Orientation::CellsInRows => (r, c),
                    Orientation::GenesInRows => (c, r),
                };
                if cells != cell_ids.len() || genes != gene_ids.len() {
                    return Err(Error::validation(format!(
                        "matrix is {cells} cells x {genes} genes but id files list {} cells and {} genes",
                        cell_ids.len(),
                        gene_ids.len()
                    )));
                }
                dims = Some((r, c, nnz));
                values = Some(Array2::zeros((cells, genes)));
            }
            Some((r, c, _)) => {
                let need = if pattern { 2 } else { 3 };
                if fields.len() != need {
                    return Err(Error::parse(path, lineno, format!("expected {need} fields")));
                }
                let (i, j) = (parse_usize(fields[0])?, parse_usize(fields[1])?);
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(Error::parse(path, lineno, format!("entry ({i}, {j}) out of bounds")));
                }
                let v = if pattern {
                    1.0
                } else {
                    fields[2]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(path, lineno, format!("'{}' is not a finite number", fields[2])))?
                };
                let (cell, gene) = match orientation {
                    Orientation::CellsInRows => (i - 1, j - 1),
                    Orientation::GenesInRows => (j - 1, i - 1),
                };
                values.as_mut().expect("set with dims")[[cell, gene]] += v;
                seen += 1;
            }
        }
    }
    let (_, _, nnz) = dims.ok_or_else(|| Error::parse(path, 1, "missing size line"))?;
    if seen != nnz {
        return Err(Error::validation(format!(
            "header announces {nnz} entries, file holds {seen}"
        )));
    }
    ExpressionMatrix::new(values.expect("set with dims"), cell_ids, gene_ids)
}

/// Two-column `(cell_id, label)` table, tab- or comma-separated. A first
/// line `cell_id<TAB>label` and lines starting with `#` are skipped.
pub fn load_label_table(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let sep = if trimmed.contains('\t') { '\t' } else { ',' };
        let fields: Vec<&str> = trimmed.split(sep).map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, idx as u64 + 1, format!("expected 2 fields, found {}", fields.len())));
        }
        if idx == 0 && fields[0] == "cell_id" && fields[1] == "label" {
            continue;
        }
        rows.push((fields[0].to_owned(), fields[1].to_owned()));
    }
    Ok(rows)
}

/// Ground-truth labels ordered like `cell_ids`. Every cell must be listed.
pub fn load_labels(path: &Path, cell_ids: &[String]) -> Result<LabelSet> {
    let rows = load_label_table(path)?;
    let mut by_cell: HashMap<&str, &str> = HashMap::with_capacity(rows.len());
    for (cell, label) in &rows {
        if by_cell.insert(cell, label).is_some() {
            return Err(Error::validation(format!("cell '{cell}' is labeled twice")));
        }
    }
    let names = cell_ids
        .iter()
        .map(|c| {
            by_cell
                .get(c.as_str())
                .copied()
                .ok_or_else(|| Error::validation(format!("no label for cell '{c}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSet::from_names(&names))
}

pub fn save_labels(path: &Path, cell_ids: &[String], labels: &[usize]) -> Result<()> {
    if cell_ids.len() != labels.len() {
        return Err(Error::validation("cell id and label counts differ"));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "cell_id\tlabel").map_err(io)?;
    for (c, l) in cell_ids.iter().zip(labels) {
        writeln!(w, "{c}\t{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Embedding dump: a `#blocks` line with the block widths, a header row,
/// then one row per cell.
pub fn save_embedding(path: &Path, cell_ids: &[String], blocks: &[EmbeddingBlock]) -> Result<()> {
    let merged = crate::reduce::merge_blocks(blocks)?;
    if merged.nrows() != cell_ids.len() {
        return Err(Error::validation("embedding rows and cell ids differ"));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let widths: Vec<String> = blocks.iter().map(|b| b.width().to_string()).collect();
    writeln!(w, "#blocks\t{}", widths.join("\t")).map_err(io)?;
    let mut header = vec!["cell".to_owned()];
    for (b, block) in blocks.iter().enumerate() {
        for j in 0..block.width() {
            header.push(format!("b{b}_pc{j}"));
        }
    }
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for (id, row) in cell_ids.iter().zip(merged.outer_iter()) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{id}\t{}", vals.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads an embedding dump back as a matrix plus its block widths.
pub fn load_embedding(path: &Path) -> Result<(ExpressionMatrix, Vec<usize>)> {
    let mut widths = Vec::new();
    let mut body = String::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(rest) = line.strip_prefix("#blocks") {
            widths = rest
                .split_whitespace()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::parse(path, idx as u64 + 1, "bad block width"))
                })
                .collect::<Result<_>>()?;
            body.push('\n');
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let m = read_dense(body.as_bytes(), path, Orientation::CellsInRows, b'\t')?;
    if widths.iter().sum::<usize>() != m.n_genes() {
        widths = vec![m.n_genes()];
    }
    Ok((m, widths))
}

pub fn save_spec(path: &Path, spec: &SubspaceSpec) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, spec).map_err(|e| Error::validation(e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_spec(path: &Path) -> Result<SubspaceSpec> {
    let spec: SubspaceSpec = serde_json::from_reader(open(path)?)
        .map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Serialized report text (see [`PipelineReport`] for the layout).
pub fn report_to_string(report: &PipelineReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn save_report(report: &PipelineReport, path: &Path) -> Result<()> {
    let text = report_to_string(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<PipelineReport> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::fs;

    #[test]
    fn dense_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, "cell\tg1\tg2\nc1\t1\t2\nc2\t3\t4\nc3\t5\t6\n").unwrap();
        let m = load_dense(&p, Orientation::CellsInRows, b'\t').unwrap();
        assert_eq!(m.n_cells(), 3);
        assert_eq!(m.n_genes(), 2);
        assert_eq!(m.values(), &array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    }

    #[test]
    fn genes_in_rows_transposes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut text = String::from("gene,c1,c2,c3,c4\n");
        for g in 0..5 {
            text.push_str(&format!("g{g},{},{},{},{}\n", g, g + 1, g + 2, g + 3));
        }
        fs::write(&p, text).unwrap();
        let m = load_dense(&p, Orientation::GenesInRows, b',').unwrap();
        assert_eq!(m.values().dim(), (4, 5));
        let rows = load_dense(&p, Orientation::CellsInRows, b',').unwrap();
        assert_eq!(m, rows.transpose());
    }

    #[test]
    fn nan_and_ragged_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, "cell\tg1\nc1\t1\nc2\tNaN\n").unwrap();
        match load_dense(&p, Orientation::CellsInRows, b'\t') {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&p, "cell\tg1\tg2\nc1\t1\n").unwrap();
        assert!(matches!(load_dense(&p, Orientation::CellsInRows, b'\t'), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "cell\tg1\nc1\tabc\n").unwrap();
        assert!(matches!(load_dense(&p, Orientation::CellsInRows, b'\t'), Err(Error::Parse { .. })));
        fs::write(&p, "cell\tg1\tg1\nc1\t1\t2\n").unwrap();
        assert!(matches!(load_dense(&p, Orientation::CellsInRows, b'\t'), Err(Error::Validation(_))));
    }

    fn write_mtx(dir: &Path, body: &str, cells: usize, genes: usize) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let m = dir.join("m.mtx");
        let c = dir.join("cells.txt");
        let g = dir.join("genes.txt");
        fs::write(&m, body).unwrap();
        fs::write(&c, (0..cells).map(|i| format!("c{i}\n")).collect::<String>()).unwrap();
        fs::write(&g, (0..genes).map(|i| format!("g{i}\tsym{i}\n")).collect::<String>()).unwrap();
        (m, c, g)
    }

    #[test]
    fn matrix_market_densifies() {
        let dir = tempfile::tempdir().unwrap();
        let (m, c, g) = write_mtx(
            dir.path(),
            "%%MatrixMarket matrix coordinate integer general\n% comment\n3 2 2\n1 1 5\n3 2 7\n",
            3,
            2,
        );
        let x = load_matrix_market(&m, &c, &g).unwrap();
        assert_eq!(x.values(), &array![[5.0, 0.0], [0.0, 0.0], [0.0, 7.0]]);
        assert_eq!(x.gene_ids()[1], "g1");
    }

    #[test]
    fn matrix_market_empty_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (m, c, g) = write_mtx(dir.path(), "%%MatrixMarket matrix coordinate real general\n3 2 0\n", 3, 2);
        let x = load_matrix_market(&m, &c, &g).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));

        let (m, c, g) = write_mtx(dir.path(), "%%MatrixMarket matrix coordinate real general\n3 2 2\n1 1 5\n3 2 7\n", 4, 2);
        assert!(matches!(load_matrix_market(&m, &c, &g), Err(Error::Validation(_))));
    }

    #[test]
    fn labels_align_to_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.tsv");
        fs::write(&p, "cell_id\tlabel\nc2\tB\nc1\tA\nc3\tB\n").unwrap();
        let cells: Vec<String> = ["c1", "c2", "c3"].iter().map(|s| s.to_string()).collect();
        let l = load_labels(&p, &cells).unwrap();
        assert_eq!(l.labels(), &[0, 1, 1]);
        let more: Vec<String> = ["c1", "c2", "c3", "c4"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(load_labels(&p, &more), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let m = ExpressionMatrix::from_values(array![[1.0]]).unwrap();
        let err = save_dense(&m, Path::new("/nonexistent/dir/m.tsv"), b'\t').unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
