//! On-disk run artifacts.
//!
//! An evolution output directory holds:
//!
//! * `config.toml`: the effective experiment configuration;
//! * `manifest.csv`: one row per completed run (append-only, used to resume);
//! * `run_NNN_generations.csv`: `generation,best_fitness,mean_fitness,best_id,best_W`;
//! * `run_NNN_lineage.csv`: `id,parent_id,birth_generation,age_at_death_or_end,fitness,W,mode,mut_s0,mut_s1`
//!   followed by `s0_0..s0_23` and `s1_0..s1_23`.
//!
//! Every CSV starts with a `#` comment line carrying the config hash and seed.
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the values exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{FrozenRow, RandomRobot, SweepCell};
use crate::config::ExperimentConfig;
use crate::evolution::{GenerationSummary, LineageRecord, MutationFlags, RunRecord};
use crate::genome::{Gene, Genome, Mode, NUM_GENES};
use crate::Error;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FROZEN_FILE: &str = "frozen.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub const GENERATION_COLUMNS: [&str; 5] = ["generation", "best_fitness", "mean_fitness", "best_id", "best_W"];
const LINEAGE_PREFIX: [&str; 9] =
    ["id", "parent_id", "birth_generation", "age_at_death_or_end", "fitness", "W", "mode", "mut_s0", "mut_s1"];
const MANIFEST_COLUMNS: [&str; 4] = ["run", "seed", "generations", "wall_seconds"];

pub fn lineage_columns() -> Vec<String> {
    let mut cols: Vec<String> = LINEAGE_PREFIX.iter().map(|s| s.to_string()).collect();
    cols.extend((0..NUM_GENES).map(|k| format!("s0_{k}")));
    cols.extend((0..NUM_GENES).map(|k| format!("s1_{k}")));
    cols
}

fn gene_columns() -> Vec<String> {
    lineage_columns().split_off(LINEAGE_PREFIX.len())
}

pub fn generations_path(dir: &Path, run: u32) -> PathBuf {
    dir.join(format!("run_{run:03}_generations.csv"))
}

pub fn lineage_path(dir: &Path, run: u32) -> PathBuf {
    dir.join(format!("run_{run:03}_lineage.csv"))
}

/// First line of every artifact.
pub fn header_comment(config_hash: &str, seed: impl std::fmt::Display, extra: &str) -> String {
    let mut line = format!("# softbot-devo {} config_hash={config_hash} seed={seed}", env!("CARGO_PKG_VERSION"));
    if !extra.is_empty() {
        line.push(' ');
        line.push_str(extra);
    }
    line.push('\n');
    line
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn csv_bytes<I, R>(columns: &[String], rows: I) -> Result<Vec<u8>, Error>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(columns).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// Write `header` + `body` to `path` via a temporary file, refusing to replace an existing file.
pub fn write_new(path: &Path, header: &str, body: &[u8]) -> Result<(), Error> {
    if path.exists() {
        return Err(Error::io(path, "refusing to overwrite an existing artifact"));
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(header.as_bytes()).and_then(|_| file.write_all(body)).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn generations_csv(gens: &[GenerationSummary]) -> Result<Vec<u8>, Error> {
    let cols: Vec<String> = GENERATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &cols,
        gens.iter().map(|g| {
            vec![g.generation.to_string(), f(g.best_fitness), f(g.mean_fitness), g.best_id.to_string(), f(g.best_window)]
        }),
    )
}

fn genome_fields(g: &Genome) -> impl Iterator<Item = String> + '_ {
    g.genes().iter().map(|g| f(g.s0)).chain(g.genes().iter().map(|g| f(g.s1)))
}

pub fn lineage_csv(lineage: &[LineageRecord]) -> Result<Vec<u8>, Error> {
    csv_bytes(
        &lineage_columns(),
        lineage.iter().map(|r| {
            let mut row = vec![
                r.id.to_string(),
                r.parent_id.map(|p| p.to_string()).unwrap_or_default(),
                r.birth_generation.to_string(),
                r.age_at_death_or_end.to_string(),
                f(r.fitness),
                f(r.window),
                r.mode().to_string(),
                (r.mutation.s0 as u8).to_string(),
                (r.mutation.s1 as u8).to_string(),
            ];
            row.extend(genome_fields(&r.genome));
            row
        }),
    )
}

/// Write both CSVs of one finished run. `base_seed` is the experiment seed;
/// the run's own derived seed is recorded alongside it.
pub fn write_run(dir: &Path, run: u32, record: &RunRecord, config_hash: &str, base_seed: u64) -> Result<(), Error> {
    let extra = format!("mode={} run={run} run_seed={}", record.mode, record.seed);
    let header = header_comment(config_hash, base_seed, &extra);
    write_new(&generations_path(dir, run), &header, &generations_csv(&record.generations)?)?;
    write_new(&lineage_path(dir, run), &header, &lineage_csv(&record.lineage)?)
}

/// Values from an artifact's `#` header line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Header {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

fn parse_header(text: &str) -> Header {
    let mut h = Header::default();
    if let Some(line) = text.lines().next().filter(|l| l.starts_with('#')) {
        for tok in line.split_whitespace() {
            if let Some(v) = tok.strip_prefix("config_hash=") {
                h.config_hash = Some(v.to_string());
            } else if let Some(v) = tok.strip_prefix("seed=") {
                h.seed = v.parse().ok();
            }
        }
    }
    h
}

/// A parsed CSV: header comment, column names and rows with their 1-based file line numbers.
struct Table {
    path: PathBuf,
    header: Header,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, expected: &[String]) -> Result<Table, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header = parse_header(&text);
        let corrupt = |line: u64, message: String| Error::Corrupt { path: path.to_path_buf(), line, message };
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let cols = reader.headers().map_err(|e| corrupt(1, e.to_string()))?.clone();
        if cols.iter().ne(expected.iter().map(String::as_str)) {
            let line = cols.position().map_or(1, |p| p.line());
            return Err(corrupt(line, format!("unexpected columns: {}", cols.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            match rec {
                Ok(r) => rows.push((r.position().map_or(0, |p| p.line()), r)),
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(corrupt(line, e.to_string()));
                }
            }
        }
        Ok(Table { path: path.to_path_buf(), header, rows })
    }

    fn field<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, Error> {
        let raw = rec.get(i).unwrap_or("");
        raw.parse().map_err(|_| Error::Corrupt {
            path: self.path.clone(),
            line,
            message: format!("bad {name} value {raw:?}"),
        })
    }

    fn float(&self, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, Error> {
        let v: f64 = self.field(line, rec, i, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Corrupt { path: self.path.clone(), line, message: format!("non-finite {name}") })
        }
    }

    fn corrupt(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Corrupt { path: self.path.clone(), line, message: message.into() }
    }
}

pub fn read_generations(path: &Path) -> Result<(Header, Vec<GenerationSummary>), Error> {
    let cols: Vec<String> = GENERATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    let t = Table::read(path, &cols)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        out.push(GenerationSummary {
            generation: t.field(*line, r, 0, "generation")?,
            best_fitness: t.float(*line, r, 1, "best_fitness")?,
            mean_fitness: t.float(*line, r, 2, "mean_fitness")?,
            best_id: t.field(*line, r, 3, "best_id")?,
            best_window: t.float(*line, r, 4, "best_W")?,
        });
    }
    Ok((t.header, out))
}

fn parse_genome(t: &Table, line: u64, r: &csv::StringRecord, start: usize, mode: Mode) -> Result<Genome, Error> {
    let mut genes = [Gene::UNIT; NUM_GENES];
    for (k, g) in genes.iter_mut().enumerate() {
        g.s0 = t.float(line, r, start + k, "s0")?;
        g.s1 = t.float(line, r, start + NUM_GENES + k, "s1")?;
    }
    Genome::new(genes, mode).map_err(|e| t.corrupt(line, e.to_string()))
}

fn parse_flag(t: &Table, line: u64, r: &csv::StringRecord, i: usize, name: &str) -> Result<bool, Error> {
    match r.get(i) {
        Some("0") => Ok(false),
        Some("1") => Ok(true),
        other => Err(t.corrupt(line, format!("bad {name} value {:?}", other.unwrap_or("")))),
    }
}

pub fn read_lineage(path: &Path) -> Result<(Header, Vec<LineageRecord>), Error> {
    let t = Table::read(path, &lineage_columns())?;
    let mut out: Vec<LineageRecord> = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        let line = *line;
        let mode: Mode = t.field(line, r, 6, "mode")?;
        let parent = r.get(1).unwrap_or("");
        let rec = LineageRecord {
            id: t.field(line, r, 0, "id")?,
            parent_id: if parent.is_empty() { None } else { Some(t.field(line, r, 1, "parent_id")?) },
            birth_generation: t.field(line, r, 2, "birth_generation")?,
            age_at_death_or_end: t.field(line, r, 3, "age_at_death_or_end")?,
            fitness: t.float(line, r, 4, "fitness")?,
            window: t.float(line, r, 5, "W")?,
            mutation: MutationFlags { s0: parse_flag(&t, line, r, 7, "mut_s0")?, s1: parse_flag(&t, line, r, 8, "mut_s1")? },
            genome: parse_genome(&t, line, r, LINEAGE_PREFIX.len(), mode)?,
        };
        if out.last().is_some_and(|p| p.id >= rec.id) {
            return Err(t.corrupt(line, "ids must be strictly increasing"));
        }
        out.push(rec);
    }
    Ok((t.header, out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub run: u32,
    pub seed: u64,
    pub generations: u32,
    pub wall_seconds: f64,
}

pub fn read_manifest(path: &Path) -> Result<(Header, Vec<ManifestEntry>), Error> {
    let cols: Vec<String> = MANIFEST_COLUMNS.iter().map(|s| s.to_string()).collect();
    let t = Table::read(path, &cols)?;
    let mut out = Vec::new();
    for (line, r) in &t.rows {
        out.push(ManifestEntry {
            run: t.field(*line, r, 0, "run")?,
            seed: t.field(*line, r, 1, "seed")?,
            generations: t.field(*line, r, 2, "generations")?,
            wall_seconds: t.float(*line, r, 3, "wall_seconds")?,
        });
    }
    Ok((t.header, out))
}

/// Create the manifest if needed and append one completed run.
pub fn append_manifest(dir: &Path, config_hash: &str, base_seed: u64, entry: &ManifestEntry) -> Result<(), Error> {
    let path = dir.join(MANIFEST_FILE);
    let fresh = !path.exists();
    let mut file = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&header_comment(config_hash, base_seed, ""));
        text.push_str(&MANIFEST_COLUMNS.join(","));
        text.push('\n');
    }
    text.push_str(&format!("{},{},{},{:.3}\n", entry.run, entry.seed, entry.generations, entry.wall_seconds));
    file.write_all(text.as_bytes()).and_then(|_| file.sync_all()).map_err(|e| Error::io(&path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedRun {
    pub index: u32,
    pub record: RunRecord,
}

/// A completed (or partially completed) evolution output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub runs: Vec<LoadedRun>,
}

impl RunDir {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }
}

/// Load every run listed in the manifest of `dir`.
pub fn load_run_dir(dir: &Path) -> Result<RunDir, Error> {
    if !dir.is_dir() {
        return Err(Error::io(dir, "not a directory"));
    }
    let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let config_hash = config.hash();
    let manifest = dir.join(MANIFEST_FILE);
    if !manifest.exists() {
        return Err(Error::InsufficientData(format!("{} has no completed runs", dir.display())));
    }
    let (_, entries) = read_manifest(&manifest)?;
    let mut runs = Vec::with_capacity(entries.len());
    for e in entries {
        let (gh, generations) = read_generations(&generations_path(dir, e.run))?;
        let (_, lineage) = read_lineage(&lineage_path(dir, e.run))?;
        if gh.config_hash.as_deref().is_some_and(|h| h != config_hash) {
            log::warn!("{}: run {} was written under config hash {:?}", dir.display(), e.run, gh.config_hash);
        }
        runs.push(LoadedRun { index: e.run, record: RunRecord { seed: e.seed, mode: config.mode, generations, lineage } });
    }
    runs.sort_by_key(|r| r.index);
    Ok(RunDir { path: dir.to_path_buf(), config, config_hash, runs })
}

pub fn frozen_csv(rows: &[(u32, u32, FrozenRow)]) -> Result<Vec<u8>, Error> {
    let cols: Vec<String> =
        ["run", "generation", "id", "fitness", "frozen_fitness"].iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &cols,
        rows.iter().map(|(run, gen, r)| {
            vec![run.to_string(), gen.to_string(), r.id.to_string(), f(r.full_fitness), f(r.frozen_fitness)]
        }),
    )
}

/// `(run, generation, id, fitness, frozen_fitness)` rows.
pub fn read_frozen(path: &Path) -> Result<Vec<(u32, u32, u64, f64, f64)>, Error> {
    let cols: Vec<String> =
        ["run", "generation", "id", "fitness", "frozen_fitness"].iter().map(|s| s.to_string()).collect();
    let t = Table::read(path, &cols)?;
    t.rows
        .iter()
        .map(|(l, r)| {
            Ok((
                t.field(*l, r, 0, "run")?,
                t.field(*l, r, 1, "generation")?,
                t.field(*l, r, 2, "id")?,
                t.float(*l, r, 3, "fitness")?,
                t.float(*l, r, 4, "frozen_fitness")?,
            ))
        })
        .collect()
}

fn random_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["mode", "index", "fitness", "rolled_over"].iter().map(|s| s.to_string()).collect();
    cols.extend(gene_columns());
    cols
}

pub fn random_search_csv(samples: &[(Mode, Vec<RandomRobot>)]) -> Result<Vec<u8>, Error> {
    csv_bytes(
        &random_columns(),
        samples.iter().flat_map(|(mode, robots)| {
            robots.iter().map(move |r| {
                let mut row =
                    vec![mode.to_string(), r.index.to_string(), f(r.fitness), (r.rolled_over as u8).to_string()];
                row.extend(genome_fields(&r.genome));
                row
            })
        }),
    )
}

pub fn read_random_search(path: &Path) -> Result<(Header, Vec<(Mode, RandomRobot)>), Error> {
    let t = Table::read(path, &random_columns())?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        let mode: Mode = t.field(*line, r, 0, "mode")?;
        out.push((
            mode,
            RandomRobot {
                index: t.field(*line, r, 1, "index")?,
                fitness: t.float(*line, r, 2, "fitness")?,
                rolled_over: parse_flag(&t, *line, r, 3, "rolled_over")?,
                genome: parse_genome(&t, *line, r, 4, mode)?,
            },
        ));
    }
    Ok((t.header, out))
}

const SWEEP_COLUMNS: [&str; 5] = ["rate", "mode", "run", "seed", "champion_fitness"];

pub fn sweep_csv(cells: &[SweepCell]) -> Result<Vec<u8>, Error> {
    let cols: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &cols,
        cells.iter().map(|c| {
            vec![f(c.rate), c.mode.to_string(), c.run.to_string(), c.seed.to_string(), f(c.champion_fitness)]
        }),
    )
}

pub fn read_sweep(path: &Path) -> Result<(Header, Vec<SweepCell>), Error> {
    let cols: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    let t = Table::read(path, &cols)?;
    let mut out = Vec::new();
    for (l, r) in &t.rows {
        out.push(SweepCell {
            rate: t.float(*l, r, 0, "rate")?,
            mode: t.field(*l, r, 1, "mode")?,
            run: t.field(*l, r, 2, "run")?,
            seed: t.field(*l, r, 3, "seed")?,
            champion_fitness: t.float(*l, r, 4, "champion_fitness")?,
        });
    }
    Ok((t.header, out))
}

/// An artifact with its leading `#` comment lines removed.
pub fn data_rows(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, body)| body);
    }
    rest
}
