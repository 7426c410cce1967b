//! Reading libraries and queries, persisting models, and writing
//! predictions and report tables.
//!
//! The reference library arrives as a FASTA file of sequences plus a
//! tab-separated taxonomy keyed by sequence id (header row names the
//! ranks); a header-embedded variant (`>id;tax=a,b,c`) is supported behind
//! an option. Models persist to a single binary container: a magic tag and
//! version, a JSON header describing everything small (ranks, kernel, urn
//! parameters, tree topology, temperature), then dense little-endian `f64`
//! arrays for the per-leaf counts and per-node hyperparameters. Log tables
//! and priors are recomputed on load through the exact code path training
//! uses, so a round trip classifies bit-identically.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationReport, CurvePoint};
use crate::classifier::{Annotation, Model, RankPrediction};
use crate::evaluation::{AccuracyRow, NoveltySummary};
use crate::sequence_model::{HyperAssignment, KernelSpec, MomentsFit, SuffStats};
use crate::species_prior::LevelParams;
use crate::taxonomy::{fill_missing_labels, TaxonomicTree, TopoNode};
use crate::{Error, Result};

const MODEL_MAGIC: &[u8; 4] = b"TXRN";
const MODEL_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 1 << 28;

/// One reference sequence with its label path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryRecord {
    pub id: String,
    pub labels: Vec<String>,
    pub sequence: String,
}

/// Options for [`load_library`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Taxonomy embedded in FASTA headers as `>id;tax=a,b,c`.
    pub embedded_tax: bool,
    /// Fail on join mismatches instead of skipping them.
    pub strict: bool,
}

/// A joined library plus the ids that failed to join.
#[derive(Debug, Clone)]
pub struct LoadedLibrary {
    pub rank_names: Vec<String>,
    pub records: Vec<LibraryRecord>,
    /// Human-readable reasons, one per skipped id.
    pub skipped: Vec<String>,
}

fn open_err(path: &Path, err: std::io::Error) -> Error {
    Error::Data(format!("cannot open {}: {err}", path.display()))
}

fn create_err(path: &Path, err: std::io::Error) -> Error {
    Error::Data(format!("cannot create {}: {err}", path.display()))
}

/// Streaming FASTA reader; yields (header token, upper-cased sequence).
/// The header token is everything after `>` up to the first whitespace.
pub struct FastaReader<R: BufRead> {
    lines: std::io::Lines<R>,
    pending: Option<String>,
    line_no: usize,
}

impl FastaReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| open_err(path, e))?;
        Ok(Self::new(BufReader::new(file)))
    }
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R) -> Self {
        FastaReader {
            lines: reader.lines(),
            pending: None,
            line_no: 0,
        }
    }

    fn next_record(&mut self) -> Result<Option<(String, String)>> {
        let header = match self.pending.take() {
            Some(h) => Some(h),
            None => loop {
                match self.lines.next() {
                    None => break None,
                    Some(line) => {
                        self.line_no += 1;
                        let line = line?;
                        let line = line.trim_end_matches('\r');
                        if line.is_empty() {
                            continue;
                        }
                        if let Some(rest) = line.strip_prefix('>') {
                            break Some(rest.to_string());
                        }
                        return Err(Error::Data(format!(
                            "FASTA line {}: sequence data before any '>' header",
                            self.line_no
                        )));
                    }
                }
            },
        };
        let Some(header) = header else {
            return Ok(None);
        };
        let id = header.split_whitespace().next().unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Data(format!(
                "FASTA line {}: empty sequence id",
                self.line_no
            )));
        }

        let mut sequence = String::new();
        loop {
            match self.lines.next() {
                None => break,
                Some(line) => {
                    self.line_no += 1;
                    let line = line?;
                    let line = line.trim_end_matches('\r');
                    if let Some(rest) = line.strip_prefix('>') {
                        self.pending = Some(rest.to_string());
                        break;
                    }
                    sequence.push_str(line.trim());
                }
            }
        }
        sequence.make_ascii_uppercase();
        Ok(Some((id, sequence)))
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<(String, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Loads a whole FASTA file.
pub fn read_fasta(path: &Path) -> Result<Vec<(String, String)>> {
    FastaReader::open(path)?.collect()
}

/// Reads a taxonomy TSV: a header row naming the id column and the ranks,
/// then one row per sequence id. Short rows are padded with empty labels.
pub fn read_taxonomy(path: &Path) -> Result<(Vec<String>, Vec<(String, Vec<String>)>)> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::Data(format!("{}: empty taxonomy file", path.display()))),
    };
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    if columns.len() < 2 {
        return Err(Error::Data(format!(
            "{}: taxonomy header needs an id column plus at least one rank",
            path.display()
        )));
    }
    let rank_names: Vec<String> = columns[1..].iter().map(|c| c.trim().to_string()).collect();
    let num_levels = rank_names.len();

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Data(format!(
                "{}: row {} has an empty id",
                path.display(),
                i + 2
            )));
        }
        let mut labels: Vec<String> = cells.map(|c| c.trim().to_string()).collect();
        if labels.len() > num_levels {
            return Err(Error::Data(format!(
                "{}: row {} has {} label columns for {} ranks",
                path.display(),
                i + 2,
                labels.len(),
                num_levels
            )));
        }
        labels.resize(num_levels, String::new());
        rows.push((id, labels));
    }
    Ok((rank_names, rows))
}

/// Loads and joins a reference library. Missing intermediate labels are
/// replaced with deterministic dummy taxa so every record spans all ranks.
pub fn load_library(
    fasta_path: &Path,
    taxonomy_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<LoadedLibrary> {
    let sequences = read_fasta(fasta_path)?;
    {
        let mut seen = std::collections::HashSet::new();
        for (id, _) in &sequences {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!(
                    "{}: duplicate sequence id '{id}'",
                    fasta_path.display()
                )));
            }
        }
    }

    let mut skipped = Vec::new();
    let mut records = Vec::with_capacity(sequences.len());
    let rank_names;

    if opts.embedded_tax {
        let mut num_levels = None;
        for (token, sequence) in sequences {
            let (id, labels) = match token.split_once(";tax=") {
                Some((id, tax)) => (
                    id.to_string(),
                    tax.split(',').map(|l| l.trim().to_string()).collect::<Vec<_>>(),
                ),
                None => {
                    skipped.push(format!("{token}: header has no ;tax= section"));
                    continue;
                }
            };
            match num_levels {
                None => num_levels = Some(labels.len()),
                Some(n) if n != labels.len() => {
                    return Err(Error::Data(format!(
                        "'{id}' has {} embedded labels, previous records had {n}",
                        labels.len()
                    )));
                }
                _ => {}
            }
            records.push(LibraryRecord {
                id,
                labels,
                sequence,
            });
        }
        let n = num_levels
            .ok_or_else(|| Error::Data("no records with embedded taxonomy".into()))?;
        rank_names = (1..=n).map(|l| format!("level{l}")).collect();
    } else {
        let taxonomy_path = taxonomy_path.ok_or_else(|| {
            Error::Usage("a taxonomy file is required unless taxonomy is embedded".into())
        })?;
        let (names, rows) = read_taxonomy(taxonomy_path)?;
        rank_names = names;
        let mut by_id: std::collections::HashMap<String, Vec<String>> = rows.into_iter().collect();
        for (id, sequence) in sequences {
            match by_id.remove(&id) {
                Some(labels) => records.push(LibraryRecord {
                    id,
                    labels,
                    sequence,
                }),
                None => skipped.push(format!("{id}: no taxonomy row")),
            }
        }
        let mut orphans: Vec<String> = by_id.into_keys().collect();
        orphans.sort();
        for id in orphans {
            skipped.push(format!("{id}: no sequence"));
        }
    }

    if opts.strict && !skipped.is_empty() {
        return Err(Error::Data(format!(
            "{} record(s) failed to join (first: {})",
            skipped.len(),
            skipped[0]
        )));
    }
    for r in records.iter_mut() {
        fill_missing_labels(&mut r.labels);
    }
    Ok(LoadedLibrary {
        rank_names,
        records,
        skipped,
    })
}

/// Writes a library as the FASTA + taxonomy TSV pair `load_library` reads.
pub fn write_library(
    fasta_path: &Path,
    taxonomy_path: &Path,
    rank_names: &[String],
    records: &[LibraryRecord],
) -> Result<()> {
    let mut fasta = BufWriter::new(File::create(fasta_path).map_err(|e| create_err(fasta_path, e))?);
    for r in records {
        writeln!(fasta, ">{}", r.id)?;
        for chunk in r.sequence.as_bytes().chunks(80) {
            fasta.write_all(chunk)?;
            fasta.write_all(b"\n")?;
        }
    }
    fasta.flush()?;

    let mut tsv =
        BufWriter::new(File::create(taxonomy_path).map_err(|e| create_err(taxonomy_path, e))?);
    writeln!(tsv, "id\t{}", rank_names.join("\t"))?;
    for r in records {
        writeln!(tsv, "{}\t{}", r.id, r.labels.join("\t"))?;
    }
    tsv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelRecord {
    alpha: f64,
    sigma: f64,
    degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopoRecord {
    level: usize,
    label: String,
    parent: Option<usize>,
    seq_count: u64,
}

/// The self-describing part of a model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelHeader {
    pub rank_names: Vec<String>,
    pub kernel: KernelSpec,
    levels: Vec<LevelRecord>,
    pub rho: f64,
    topology: Vec<TopoRecord>,
    clamped_loci: Vec<usize>,
}

impl ModelHeader {
    /// Fitted (alpha, sigma) per level.
    pub fn level_params(&self) -> Result<Vec<LevelParams>> {
        self.levels
            .iter()
            .map(|l| LevelParams::new(l.alpha, l.sigma))
            .collect()
    }

    pub fn degenerate_levels(&self) -> Vec<bool> {
        self.levels.iter().map(|l| l.degenerate).collect()
    }

    /// Rebuilds the taxonomy from the stored topology.
    pub fn tree(&self) -> Result<TaxonomicTree> {
        let topo = self
            .topology
            .iter()
            .map(|t| TopoNode {
                level: t.level,
                label: t.label.clone(),
                parent: t.parent,
                seq_count: t.seq_count,
            })
            .collect();
        TaxonomicTree::from_topology(self.rank_names.clone(), topo)
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0u8; 8 * 8192.min(n.max(1))];
    let mut remaining = n;
    while remaining > 0 {
        let k = 8192.min(remaining);
        let bytes = &mut buf[..8 * k];
        r.read_exact(bytes)
            .map_err(|_| Error::Data(format!("model file truncated while reading {what}")))?;
        for c in bytes.chunks_exact(8) {
            out.push(f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        }
        remaining -= k;
    }
    Ok(out)
}

/// Serializes a trained model. The counts and hyperparameters are written
/// verbatim; everything derived (log tables, priors) is rebuilt on load.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let tree = &model.tree;
    let header = ModelHeader {
        rank_names: tree.rank_names().to_vec(),
        kernel: model.kernel(),
        levels: model
            .params
            .iter()
            .zip(&model.degenerate_levels)
            .map(|(p, &degenerate)| LevelRecord {
                alpha: p.alpha,
                sigma: p.sigma,
                degenerate,
            })
            .collect(),
        rho: model.rho,
        topology: (0..tree.num_nodes())
            .map(|i| {
                let n = tree.node(i);
                TopoRecord {
                    level: n.level,
                    label: n.label.clone(),
                    parent: n.parent,
                    seq_count: n.seq_count,
                }
            })
            .collect(),
        clamped_loci: model.hyper.node_fits.iter().map(|f| f.clamped_loci).collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Data(format!("cannot encode model header: {e}")))?;

    let mut w = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for row in &model.stats.leaf_counts {
        write_f64s(&mut w, row)?;
    }
    write_f64s(&mut w, &model.stats.leaf_norm)?;
    for fit in &model.hyper.node_fits {
        write_f64s(&mut w, &fit.xi)?;
    }
    for fit in &model.hyper.node_fits {
        write_f64s(&mut w, &fit.xi0)?;
    }
    w.flush()?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<ModelHeader> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Data("model file truncated while reading magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Data("not a model file (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Data("model file truncated while reading version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != MODEL_VERSION {
        return Err(Error::Data(format!(
            "unsupported model version {version} (this build reads {MODEL_VERSION})"
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Data("model file truncated while reading header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes);
    if header_len > MAX_HEADER_BYTES {
        return Err(Error::Data(format!(
            "model header length {header_len} is implausible"
        )));
    }
    let mut header_json = vec![0u8; header_len as usize];
    r.read_exact(&mut header_json)
        .map_err(|_| Error::Data("model file truncated while reading header".into()))?;
    serde_json::from_slice(&header_json)
        .map_err(|e| Error::Data(format!("corrupt model header: {e}")))
}

/// Reads only the self-describing header (no array payload).
pub fn load_model_header(path: &Path) -> Result<ModelHeader> {
    let mut r = BufReader::new(File::open(path).map_err(|e| open_err(path, e))?);
    read_header(&mut r)
}

/// Loads a model and rebuilds its derived state.
pub fn load_model(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path).map_err(|e| open_err(path, e))?);
    let header = read_header(&mut r)?;
    let tree = header.tree()?;
    let params = header.level_params()?;
    let degenerate = header.degenerate_levels();
    let spec = header.kernel;

    let num_leaves = tree.leaves().len();
    let num_internal = tree.internal_nodes().len();
    if header.clamped_loci.len() != num_internal {
        return Err(Error::Data(
            "model header clamp flags do not match the topology".into(),
        ));
    }
    let table_len = spec.table_len();
    let num_loci = spec.num_loci();

    let mut leaf_counts = Vec::with_capacity(num_leaves);
    for i in 0..num_leaves {
        leaf_counts.push(read_f64s(&mut r, table_len, &format!("leaf counts [{i}]"))?);
    }
    let leaf_norm = read_f64s(&mut r, num_leaves, "leaf normalizers")?;
    let mut xi_rows = Vec::with_capacity(num_internal);
    for i in 0..num_internal {
        xi_rows.push(read_f64s(&mut r, table_len, &format!("hyperparameters [{i}]"))?);
    }
    let mut node_fits = Vec::with_capacity(num_internal);
    for (i, xi) in xi_rows.into_iter().enumerate() {
        let xi0 = read_f64s(&mut r, num_loci, &format!("concentrations [{i}]"))?;
        node_fits.push(MomentsFit {
            xi,
            xi0,
            clamped_loci: header.clamped_loci[i],
        });
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Data("model file has trailing data".into())),
        Err(e) => return Err(e.into()),
    }

    let stats = SuffStats {
        spec,
        leaf_counts,
        leaf_norm,
    };
    let hyper = HyperAssignment { node_fits };
    Model::from_parts(tree, params, degenerate, stats, hyper, header.rho)
}

/// Prediction output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Tsv,
    Jsonl,
}

/// Formats a value with 6 significant digits in plain decimal notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (5 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Streaming prediction writer; rows appear in the order annotations are
/// written.
pub struct PredictionWriter<W: Write> {
    w: W,
    format: OutputFormat,
    rank_names: Vec<String>,
    wrote_header: bool,
}

impl<W: Write> PredictionWriter<W> {
    pub fn new(w: W, format: OutputFormat, rank_names: Vec<String>) -> Self {
        PredictionWriter {
            w,
            format,
            rank_names,
            wrote_header: false,
        }
    }

    pub fn write(&mut self, annotation: &Annotation) -> Result<()> {
        match self.format {
            OutputFormat::Tsv => {
                if !self.wrote_header {
                    self.wrote_header = true;
                    let mut parts = vec!["id".to_string()];
                    for rank in &self.rank_names {
                        parts.push(rank.clone());
                        parts.push(format!("{rank}_prob"));
                        parts.push(format!("{rank}_novel"));
                    }
                    parts.push("top_leaves".into());
                    writeln!(self.w, "{}", parts.join("\t"))?;
                }
                let mut parts = vec![annotation.id.clone()];
                for rank in &annotation.ranks {
                    parts.push(rank.label.clone());
                    parts.push(fmt_sig(rank.probability));
                    parts.push(rank.novel.to_string());
                }
                let leaves: Vec<String> = annotation
                    .top_leaves
                    .iter()
                    .map(|(path, p)| format!("{path}={}", fmt_sig(*p)))
                    .collect();
                parts.push(leaves.join(";"));
                writeln!(self.w, "{}", parts.join("\t"))?;
            }
            OutputFormat::Jsonl => {
                let line = serde_json::to_string(annotation)
                    .map_err(|e| Error::Data(format!("cannot encode prediction: {e}")))?;
                writeln!(self.w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Writes annotations to a file; one row or JSON object per query.
pub fn write_predictions(
    annotations: &[Annotation],
    path: &Path,
    format: OutputFormat,
    rank_names: &[String],
) -> Result<()> {
    let file = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    let mut writer = PredictionWriter::new(file, format, rank_names.to_vec());
    for a in annotations {
        writer.write(a)?;
    }
    writer.finish()
}

/// Parses a predictions file written by [`PredictionWriter`] (either
/// format, detected from the first byte).
pub fn read_predictions(path: &Path) -> Result<Vec<Annotation>> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(line) => line?,
        None => return Ok(Vec::new()),
    };

    if first.trim_start().starts_with('{') {
        let mut out = Vec::new();
        for line in std::iter::once(Ok(first)).chain(lines) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ann: Annotation = serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("bad prediction line: {e}")))?;
            out.push(ann);
        }
        return Ok(out);
    }

    let columns: Vec<&str> = first.trim_end_matches('\r').split('\t').collect();
    if columns.len() < 4 || (columns.len() - 2) % 3 != 0 {
        return Err(Error::Data(
            "prediction TSV header does not have id + 3 columns per rank + top_leaves".into(),
        ));
    }
    let rank_names: Vec<String> = columns[1..columns.len() - 1]
        .chunks(3)
        .map(|c| c[0].to_string())
        .collect();

    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(Error::Data(format!(
                "prediction row {} has {} cells, expected {}",
                i + 2,
                cells.len(),
                columns.len()
            )));
        }
        let parse_prob = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Data(format!("bad probability '{s}' in row {}", i + 2)))
        };
        let mut ranks = Vec::with_capacity(rank_names.len());
        for (r, chunk) in cells[1..cells.len() - 1].chunks(3).enumerate() {
            ranks.push(RankPrediction {
                level: r + 1,
                rank: rank_names[r].clone(),
                label: chunk[0].to_string(),
                probability: parse_prob(chunk[1])?,
                novel: chunk[2] == "true",
            });
        }
        let top_leaves = cells[cells.len() - 1]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (path, p) = pair.rsplit_once('=').ok_or_else(|| {
                    Error::Data(format!("bad top-leaf entry '{pair}' in row {}", i + 2))
                })?;
                Ok((path.to_string(), parse_prob(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Annotation {
            id: cells[0].to_string(),
            ranks,
            top_leaves,
        });
    }
    Ok(out)
}

/// Writes the per-rank accuracy table as TSV.
pub fn write_accuracy_table(rows: &[AccuracyRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    writeln!(w, "rank\tgroup\tn\taccuracy_pct\tmean_probability")?;
    for row in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            row.rank,
            row.group.as_str(),
            row.n,
            fmt_sig(row.accuracy_pct),
            fmt_sig(row.mean_probability)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the novelty summary as key/value TSV.
pub fn write_novelty_summary(summary: &NoveltySummary, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    writeln!(w, "metric\tvalue")?;
    writeln!(w, "predicted_novel_leaves\t{}", summary.predicted_novel_leaves)?;
    writeln!(w, "truly_novel\t{}", summary.truly_novel)?;
    writeln!(w, "recognized_novel\t{}", summary.recognized_novel)?;
    writeln!(w, "fully_correct_novel\t{}", summary.fully_correct_novel)?;
    writeln!(w, "recognized_pct\t{}", fmt_sig(summary.recognized_pct))?;
    writeln!(w, "fully_correct_pct\t{}", fmt_sig(summary.fully_correct_pct))?;
    w.flush()?;
    Ok(())
}

/// Writes the temperature grid search as TSV.
pub fn write_calibration_report(report: &CalibrationReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    writeln!(w, "rho\taccuracy_pct\tmean_probability\tgap\tece\tchosen")?;
    for p in &report.grid {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            fmt_sig(p.rho),
            fmt_sig(p.accuracy_pct),
            fmt_sig(p.mean_probability),
            fmt_sig(p.gap),
            fmt_sig(p.ece),
            p.rho == report.chosen_rho
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the calibration curve as plot-ready CSV.
pub fn write_calibration_curve(curve: &[CurvePoint], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| create_err(path, e))?);
    writeln!(w, "cumulative_probability_pct,cumulative_accuracy_pct")?;
    for p in curve {
        writeln!(
            w,
            "{},{}",
            fmt_sig(p.cumulative_probability_pct),
            fmt_sig(p.cumulative_accuracy_pct)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train;
    use crate::taxonomy::{NodeId, TreeRecord};
    use std::io::Cursor;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn fasta_reader_handles_multiline_and_crlf() {
        let data = ">q1 some description\r\nacgt\nACGT\n\n>q2\nTT-T\n";
        let records: Vec<(String, String)> = FastaReader::new(Cursor::new(data))
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(
            records,
            vec![
                ("q1".into(), "ACGTACGT".into()),
                ("q2".into(), "TT-T".into())
            ]
        );
    }

    #[test]
    fn fasta_rejects_headerless_data() {
        let data = "ACGT\n>q1\nACGT\n";
        let result: Result<Vec<_>> = FastaReader::new(Cursor::new(data)).collect();
        assert!(result.is_err());
    }

    #[test]
    fn library_join_and_dummy_fill() {
        let dir = tmp();
        let fasta = dir.path().join("lib.fasta");
        let tsv = dir.path().join("lib.tsv");
        std::fs::write(&fasta, ">a\nACGT\n>b\nTTTT\n>c\nGGGG\n").unwrap();
        std::fs::write(
            &tsv,
            "id\tfamily\tgenus\na\tfamA\tg1\nb\tfamA\t\nzz\tfamB\tg9\n",
        )
        .unwrap();

        let lib = load_library(&fasta, Some(&tsv), &LoadOptions::default()).unwrap();
        assert_eq!(lib.rank_names, vec!["family", "genus"]);
        assert_eq!(lib.records.len(), 2);
        assert_eq!(lib.records[0].labels, vec!["famA", "g1"]);
        // Blank genus cell fills with a dummy derived from its parent path.
        assert_eq!(lib.records[1].labels[0], "famA");
        assert!(lib.records[1].labels[1].starts_with("unk_"));
        // 'c' has no taxonomy row, 'zz' has no sequence.
        assert_eq!(lib.skipped.len(), 2);

        let strict = LoadOptions {
            strict: true,
            ..Default::default()
        };
        assert!(load_library(&fasta, Some(&tsv), &strict).is_err());
    }

    #[test]
    fn embedded_taxonomy_headers() {
        let dir = tmp();
        let fasta = dir.path().join("lib.fasta");
        std::fs::write(&fasta, ">a;tax=famA,g1\nACGT\n>b;tax=famB,g2\nTTTT\n").unwrap();
        let opts = LoadOptions {
            embedded_tax: true,
            ..Default::default()
        };
        let lib = load_library(&fasta, None, &opts).unwrap();
        assert_eq!(lib.rank_names, vec!["level1", "level2"]);
        assert_eq!(lib.records[1].labels, vec!["famB", "g2"]);
    }

    #[test]
    fn library_round_trip_is_identity() {
        let dir = tmp();
        let fasta = dir.path().join("lib.fasta");
        let tsv = dir.path().join("lib.tsv");
        let rank_names = vec!["family".to_string(), "genus".to_string()];
        let records: Vec<LibraryRecord> = (0..10_000)
            .map(|i| LibraryRecord {
                id: format!("seq{i:05}"),
                labels: vec![format!("fam{}", i % 7), format!("g{}", i % 131)],
                sequence: "ACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGT".into(),
            })
            .collect();
        write_library(&fasta, &tsv, &rank_names, &records).unwrap();
        let lib = load_library(&fasta, Some(&tsv), &LoadOptions::default()).unwrap();
        assert_eq!(lib.rank_names, rank_names);
        assert_eq!(lib.records, records);
        assert!(lib.skipped.is_empty());
    }

    fn toy_model() -> Model {
        let leaves: [(&str, &str, &str); 4] = [
            ("famA", "gx", "ACACACACACAC"),
            ("famA", "gy", "AGAGAGAGAGAG"),
            ("famB", "gz", "GTGTGTGTGTGT"),
            ("famB", "gw", "TC-CTCTCTCTC"),
        ];
        let mut records = Vec::new();
        let mut seqs = Vec::new();
        for (i, (fam, genus, seq)) in leaves.iter().enumerate() {
            for j in 0..3 {
                records.push(TreeRecord {
                    id: format!("s{i}_{j}"),
                    labels: vec![fam.to_string(), genus.to_string()],
                });
                seqs.push(seq.to_string());
            }
        }
        let (tree, assign) =
            TaxonomicTree::build(vec!["family".into(), "genus".into()], &records).unwrap();
        let pairs: Vec<(NodeId, &str)> = assign
            .iter()
            .zip(&seqs)
            .map(|(&v, s)| (v, s.as_str()))
            .collect();
        train(tree, KernelSpec::product1(12).unwrap(), pairs).unwrap()
    }

    #[test]
    fn model_round_trip_classifies_bit_identically() {
        let dir = tmp();
        let path = dir.path().join("toy.model");
        let mut model = toy_model();
        model.rho = 0.3;
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.rho, 0.3);
        assert_eq!(loaded.params, model.params);

        for query in ["ACACACACACAC", "AGAGAGAGAGAG", "NNNNACGTACGT"] {
            let (a, ann_a) = model.classify("q", query).unwrap();
            let (b, ann_b) = loaded.classify("q", query).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(ann_a.ranks.len(), ann_b.ranks.len());
            for (ra, rb) in ann_a.ranks.iter().zip(&ann_b.ranks) {
                assert_eq!(ra.label, rb.label);
                assert_eq!(ra.probability.to_bits(), rb.probability.to_bits());
            }
        }
    }

    #[test]
    fn header_only_load_reports_metadata() {
        let dir = tmp();
        let path = dir.path().join("toy.model");
        let model = toy_model();
        save_model(&model, &path).unwrap();
        let header = load_model_header(&path).unwrap();
        assert_eq!(header.rank_names, vec!["family", "genus"]);
        assert_eq!(header.level_params().unwrap(), model.params);
        assert_eq!(header.kernel, model.kernel());
        let tree = header.tree().unwrap();
        assert_eq!(tree.leaves().len(), 4);
    }

    #[test]
    fn truncated_or_corrupt_model_fails_cleanly() {
        let dir = tmp();
        let path = dir.path().join("toy.model");
        save_model(&toy_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let truncated = dir.path().join("short.model");
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        let err = load_model(&truncated).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let magic = dir.path().join("magic.model");
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        std::fs::write(&magic, &corrupt).unwrap();
        assert!(load_model(&magic).is_err());

        let padded = dir.path().join("padded.model");
        let mut extra = bytes;
        extra.push(0);
        std::fs::write(&padded, &extra).unwrap();
        let err = load_model(&padded).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn fmt_sig_has_six_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(0.823456789), "0.823457");
        assert_eq!(fmt_sig(0.000012345678), "0.0000123457");
        assert_eq!(fmt_sig(12.3456789), "12.3457");
        assert_eq!(fmt_sig(100.0), "100.000");
    }

    #[test]
    fn predictions_round_trip_within_print_precision() {
        let dir = tmp();
        let model = toy_model();
        let annotations: Vec<Annotation> = ["ACACACACACAC", "GTGTGTGTGTGT"]
            .iter()
            .enumerate()
            .map(|(i, q)| model.classify(&format!("q{i}"), q).unwrap().1)
            .collect();

        for format in [OutputFormat::Tsv, OutputFormat::Jsonl] {
            let path = dir.path().join(match format {
                OutputFormat::Tsv => "preds.tsv",
                OutputFormat::Jsonl => "preds.jsonl",
            });
            write_predictions(&annotations, &path, format, model.tree.rank_names()).unwrap();
            let parsed = read_predictions(&path).unwrap();
            assert_eq!(parsed.len(), annotations.len());
            for (a, b) in annotations.iter().zip(&parsed) {
                assert_eq!(a.id, b.id);
                for (ra, rb) in a.ranks.iter().zip(&b.ranks) {
                    assert_eq!(ra.label, rb.label);
                    assert_eq!(ra.novel, rb.novel);
                    let scale = ra.probability.abs().max(1e-30);
                    assert!(
                        (ra.probability - rb.probability).abs() / scale < 1e-5,
                        "{} vs {}",
                        ra.probability,
                        rb.probability
                    );
                }
                assert_eq!(a.top_leaves.len(), b.top_leaves.len());
                for ((pa, _), (pb, _)) in a.top_leaves.iter().zip(&b.top_leaves) {
                    assert_eq!(pa, pb);
                }
            }
        }
    }
}
