//! Figure-analog tables and charts built from loaded artifacts.
//!
//! Each builder returns a [`Figure`]: CSV rows, summary lines that end up as
//! `#` comments at the top of the CSV, and an SVG chart.

use std::collections::{BTreeMap, HashMap};

use super::plot::{Chart, Series, Style};
use super::*;
use crate::records::RunDir;

#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub name: &'static str,
    pub notes: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub chart: Chart,
}

impl Figure {
    fn new(name: &'static str, columns: &[&'static str], chart: Chart) -> Figure {
        Figure { name, notes: Vec::new(), columns: columns.to_vec(), rows: Vec::new(), chart }
    }

    /// CSV body (column header plus rows), without comment lines.
    pub fn csv(&self) -> Result<Vec<u8>, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(&self.columns).map_err(e)?;
        for r in &self.rows {
            w.write_record(r).map_err(e)?;
        }
        w.into_inner().map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn comment_block(&self) -> String {
        self.notes.iter().map(|n| format!("# {n}\n")).collect()
    }
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn mw_note(label: &str, a_name: &str, a: &[f64], b_name: &str, b: &[f64]) -> String {
    match mann_whitney_u(a, b) {
        Ok(r) => format!(
            "{label}: U({a_name} vs {b_name})={} n={}/{} p={:.4e} ({:?})",
            r.u, r.n_a, r.n_b, r.p, r.method
        ),
        Err(e) => format!("{label}: {e}"),
    }
}

/// Histogram of random-search fitness over 50 (or `bins`) pooled bins.
pub fn fig3_random(samples: &[(Mode, Vec<f64>)], bins: usize, epsilon: f64) -> Result<Figure, Error> {
    let slices: Vec<&[f64]> = samples.iter().map(|(_, v)| v.as_slice()).collect();
    let hist = Histogram::pooled(&slices, bins)?;
    let mut fig = Figure::new(
        "fig3_random",
        &["mode", "bin_lo", "bin_hi", "count", "relative_frequency"],
        Chart::new("Random robots", "fitness F", "relative frequency"),
    );
    for (i, (mode, values)) in samples.iter().enumerate() {
        let n = values.len() as f64;
        let mut pts = Vec::new();
        for (b, &c) in hist.counts[i].iter().enumerate() {
            fig.rows.push(vec![mode.to_string(), f(hist.edges[b]), f(hist.edges[b + 1]), c.to_string(), f(c as f64 / n)]);
            pts.push((hist.edges[b], c as f64 / n));
        }
        pts.push((hist.edges[hist.edges.len() - 1], pts.last().map_or(0.0, |p| p.1)));
        fig.chart.push(Series::new(mode.to_string(), Style::Steps, pts));
        let mode_bin = hist.mode_bin(i);
        fig.notes.push(format!(
            "{mode}: n={} |F|<{epsilon} fraction={:.4} median={:.4e} mode_bin=[{:.4e},{:.4e}) zero_in_mode_bin={}",
            values.len(),
            fraction_near_zero(values, epsilon),
            median(values),
            hist.edges[mode_bin],
            hist.edges[mode_bin + 1],
            hist.bin_of(0.0) == Some(mode_bin),
        ));
    }
    if let [(ma, a), (mb, b)] = samples {
        let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
        fig.notes.push(mw_note("|F|", &ma.to_string(), &abs(a), &mb.to_string(), &abs(b)));
    }
    Ok(fig)
}

/// Frozen-midlife fitness keyed by (run, generation).
pub type FrozenTable = HashMap<(u32, u32), f64>;

/// Best-of-generation fitness per run, with frozen reevaluations where available.
pub fn fig4_trajectories(dirs: &[(&RunDir, Option<&FrozenTable>)]) -> Result<Figure, Error> {
    let mut fig = Figure::new(
        "fig4_trajectories",
        &["mode", "run", "generation", "best_fitness", "frozen_fitness"],
        Chart::new("Best of generation", "generation", "fitness F"),
    );
    // mode -> generation -> values across runs
    let mut best: BTreeMap<Mode, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    let mut frozen: BTreeMap<Mode, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for (dir, fz) in dirs {
        for run in &dir.runs {
            for g in &run.record.generations {
                let fr = fz.and_then(|t| t.get(&(run.index, g.generation)).copied());
                fig.rows.push(vec![
                    dir.mode().to_string(),
                    run.index.to_string(),
                    g.generation.to_string(),
                    f(g.best_fitness),
                    fr.map(f).unwrap_or_default(),
                ]);
                best.entry(dir.mode()).or_default().entry(g.generation).or_default().push(g.best_fitness);
                if let Some(v) = fr {
                    frozen.entry(dir.mode()).or_default().entry(g.generation).or_default().push(v);
                }
            }
        }
    }
    for (label, table) in [("", &best), (" frozen", &frozen)] {
        for (mode, gens) in table {
            let line: Vec<(f64, f64)> = gens.iter().map(|(g, v)| (*g as f64, median(v))).collect();
            let band = gens.iter().map(|(g, v)| (*g as f64, quantile(v, 0.25), quantile(v, 0.75))).collect();
            fig.chart.push(Series::new(format!("{mode}{label} (median, IQR)"), Style::Line, line).with_band(band));
        }
    }
    for (mode, gens) in &best {
        if let Some((g, v)) = gens.iter().next_back() {
            fig.notes.push(format!("{mode}: generation {g} champion median={:.4e} n={}", median(v), v.len()));
        }
    }
    if let (Some(evo), Some(devo)) = (best.get(&Mode::Evo), best.get(&Mode::EvoDevo)) {
        let last = evo.keys().next_back().copied().min(devo.keys().next_back().copied());
        if let Some(g) = last {
            fig.notes.push(mw_note(&format!("generation {g}"), "evo-devo", &devo[&g], "evo", &evo[&g]));
        }
        let first = evo.iter().find_map(|(g, e)| {
            let d = devo.get(g)?;
            let r = mann_whitney_u(d, e).ok()?;
            (r.p < 0.05 && median(d) > median(e)).then_some(*g)
        });
        fig.notes.push(match first {
            Some(g) => format!("first generation with evo-devo > evo at p<0.05: {g}"),
            None => "evo-devo never exceeds evo at p<0.05".into(),
        });
    }
    Ok(fig)
}

/// Spearman correlation between W and F over above-median Evo-Devo individuals.
pub fn window_fitness_correlation(dirs: &[&RunDir]) -> Result<Spearman, Error> {
    let (mut w, mut fit) = (Vec::new(), Vec::new());
    for dir in dirs.iter().filter(|d| d.mode() == Mode::EvoDevo) {
        for run in &dir.runs {
            for r in above_median(&run.record.lineage) {
                w.push(r.window);
                fit.push(r.fitness);
            }
        }
    }
    spearman(&w, &fit)
}

/// Development window against fitness for every Evo-Devo individual.
pub fn fig5_window_vs_fitness(dirs: &[&RunDir]) -> Result<Figure, Error> {
    let mut fig = Figure::new(
        "fig5_window_vs_fitness",
        &["run", "id", "W", "F", "above_run_median"],
        Chart::new("Development window vs fitness (evo-devo)", "W", "fitness F"),
    );
    let mut pts = Vec::new();
    for dir in dirs.iter().filter(|d| d.mode() == Mode::EvoDevo) {
        for run in &dir.runs {
            let fs: Vec<f64> = run.record.lineage.iter().map(|r| r.fitness).collect();
            let m = if fs.is_empty() { 0.0 } else { median(&fs) };
            for r in &run.record.lineage {
                fig.rows.push(vec![
                    run.index.to_string(),
                    r.id.to_string(),
                    f(r.window),
                    f(r.fitness),
                    ((r.fitness > m) as u8).to_string(),
                ]);
                pts.push((r.window, r.fitness));
            }
        }
    }
    fig.chart.push(Series::new("evo-devo", Style::Points, pts));
    fig.notes.push(match window_fitness_correlation(dirs) {
        Ok(s) => format!("spearman(W, F | F > run median): rho={:.4} n={} p={:.4e}", s.rho, s.n, s.p),
        Err(e) => format!("spearman(W, F | F > run median): {e}"),
    });
    Ok(fig)
}

/// Development window along the lineage of each run champion.
pub fn fig6_lineage_windows(dirs: &[&RunDir]) -> Result<Figure, Error> {
    let mut fig = Figure::new(
        "fig6_lineage_windows",
        &["mode", "run", "step", "id", "birth_generation", "W", "F"],
        Chart::new("Development window along champion lineages", "ancestor (oldest = 0)", "W"),
    );
    for dir in dirs {
        for run in &dir.runs {
            let Some(champ) = run.record.champion() else { continue };
            let path = lineage_extract(&run.record.lineage, champ.id)?;
            let mut pts = Vec::new();
            for (step, s) in path.iter().enumerate() {
                fig.rows.push(vec![
                    dir.mode().to_string(),
                    run.index.to_string(),
                    step.to_string(),
                    s.id.to_string(),
                    s.birth_generation.to_string(),
                    f(s.window),
                    f(s.fitness),
                ]);
                pts.push((step as f64, s.window));
            }
            fig.notes.push(format!(
                "{} run {}: lineage length {} W first={:.3} last={:.3}",
                dir.mode(),
                run.index,
                path.len(),
                path.first().map_or(0.0, |s| s.window),
                path.last().map_or(0.0, |s| s.window)
            ));
            fig.chart.push(Series::new(format!("{} run {}", dir.mode(), run.index), Style::Line, pts));
        }
    }
    Ok(fig)
}

/// All positive-fitness parent–child pairs of the given directories.
pub fn collect_impacts(dirs: &[&RunDir]) -> Vec<(Mode, u32, MutationImpact)> {
    dirs.iter()
        .flat_map(|d| {
            d.runs.iter().flat_map(move |run| {
                mutation_impacts(&run.record.lineage).into_iter().map(move |m| (d.mode(), run.index, m))
            })
        })
        .collect()
}

/// Child against parent fitness for every positive-fitness pair.
pub fn fig7_mutation_impact(dirs: &[&RunDir]) -> Result<Figure, Error> {
    let mut fig = Figure::new(
        "fig7_mutation_impact",
        &["mode", "run", "parent_id", "child_id", "parent_F", "child_F", "M", "early", "late"],
        Chart::new("Mutation impact", "parent fitness", "child fitness"),
    );
    let impacts = collect_impacts(dirs);
    let mut by_mode: BTreeMap<Mode, Vec<MutationImpact>> = BTreeMap::new();
    for (mode, run, m) in &impacts {
        fig.rows.push(vec![
            mode.to_string(),
            run.to_string(),
            m.parent_id.to_string(),
            m.child_id.to_string(),
            f(m.parent_fitness),
            f(m.child_fitness),
            f(m.m),
            (m.early as u8).to_string(),
            (m.late as u8).to_string(),
        ]);
        by_mode.entry(*mode).or_default().push(*m);
    }
    let mut max = 0f64;
    for (mode, list) in &by_mode {
        let pts: Vec<(f64, f64)> = list.iter().map(|m| (m.parent_fitness, m.child_fitness)).collect();
        max = pts.iter().fold(max, |a, p| a.max(p.0).max(p.1));
        fig.chart.push(Series::new(mode.to_string(), Style::Points, pts));
        let split = early_late_split(list);
        let show = |c: Option<ClassMean>| c.map_or("missing".into(), |c| format!("{:.4} (n={})", c.mean, c.count));
        fig.notes.push(format!("{mode}: M0 (early)={} M1 (late only)={}", show(split.early), show(split.late)));
        if !split.early_values.is_empty() && !split.late_values.is_empty() {
            fig.notes.push(mw_note(&format!("{mode} M"), "late", &split.late_values, "early", &split.early_values));
        }
    }
    fig.chart.push(Series::new("neutral", Style::Line, vec![(0.0, 0.0), (max, max)]));
    Ok(fig)
}

/// Champion fitness per mutation rate and mode.
pub fn fig8_sweep(cells: &[SweepCell]) -> Result<Figure, Error> {
    let mut fig = Figure::new(
        "fig8_sweep",
        &["rate", "mode", "runs", "median", "q25", "q75", "U_evo_devo_vs_evo", "p"],
        Chart::new("Mutation-rate sweep", "per-voxel mutation probability", "champion fitness"),
    );
    let mut table: BTreeMap<(u64, Mode), Vec<f64>> = BTreeMap::new();
    for c in cells {
        table.entry((c.rate.to_bits(), c.mode)).or_default().push(c.champion_fitness);
    }
    let mut lines: BTreeMap<Mode, (Vec<(f64, f64)>, Vec<(f64, f64, f64)>)> = BTreeMap::new();
    let mut rates: Vec<f64> = table.keys().map(|(r, _)| f64::from_bits(*r)).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    for rate in rates {
        let evo = table.get(&(rate.to_bits(), Mode::Evo));
        let devo = table.get(&(rate.to_bits(), Mode::EvoDevo));
        let test = match (devo, evo) {
            (Some(d), Some(e)) => mann_whitney_u(d, e).ok(),
            _ => None,
        };
        for mode in [Mode::Evo, Mode::EvoDevo] {
            let Some(v) = table.get(&(rate.to_bits(), mode)) else { continue };
            let (q1, q2, q3) = (quantile(v, 0.25), median(v), quantile(v, 0.75));
            fig.rows.push(vec![
                f(rate),
                mode.to_string(),
                v.len().to_string(),
                f(q2),
                f(q1),
                f(q3),
                test.map(|t| f(t.u)).unwrap_or_default(),
                test.map(|t| f(t.p)).unwrap_or_default(),
            ]);
            let e = lines.entry(mode).or_default();
            e.0.push((rate, q2));
            e.1.push((rate, q1, q3));
        }
    }
    for (mode, (line, band)) in lines {
        fig.chart.push(Series::new(mode.to_string(), Style::Line, line).with_band(band));
    }
    Ok(fig)
}
