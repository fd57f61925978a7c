use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{self as stdio, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use clusterloop_core::fit::{fit_visibility, CurvePoint, FitResult, VisibilityCurve};
use clusterloop_core::multiphoton::{Distinguishability, ModeEngine};
use clusterloop_core::network::NetworkOptions;
use clusterloop_core::postselect::{full_expectation, pps_windows, window_expectation, SelectionWindow};
use clusterloop_core::qubit::simulate_chain;
use clusterloop_core::rates::{predict_rates, scaling_ratio, step_ratios, RateModel};
use clusterloop_core::sampler::{assemble_stream, sample_worker, SamplerOptions, ScanSchedule};
use clusterloop_core::stream::{align_scans, points_from_counts, Monitor, MonitorWindow, SequenceLayout};
use clusterloop_core::{reference, CurveKind, ExperimentConfig, ObservableSpec};

use crate::cli::{AnalyzeArgs, Cli, Command, ConfigArgs, Engine, Format, PpsArgs, RatesArgs, SampleArgs, ScanArgs, SimulateArgs};
use crate::io::{read_config, write_curve_csv, write_stream, StreamReader};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Scan(a) => scan(&cli, a),
        Command::Pps(a) => pps(&cli, a),
        Command::Rates(a) => rates(&cli, a),
        Command::Sample(a) => sample(&cli, a),
        Command::Analyze(a) => analyze(&cli, a),
    }
}

/// Standard output, or `name` inside the output directory.
fn sink(cli: &Cli, name: &str) -> Result<Box<dyn Write>> {
    Ok(match &cli.out {
        Some(dir) => {
            let path = dir.join(name);
            Box::new(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
        }
        None => Box::new(BufWriter::new(stdio::stdout().lock())),
    })
}

fn base_config(cli: &Cli, default_n: usize) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(path) => read_config(path).with_context(|| format!("reading {}", path.display())),
        None => Ok(ExperimentConfig::with_photons(default_n)),
    }
}

fn resolve(cli: &Cli, args: &ConfigArgs, default_n: usize) -> Result<ExperimentConfig> {
    args.apply(base_config(cli, default_n)?)
}

fn phase_in(cli: &Cli, phi: f64) -> f64 {
    if cli.degrees {
        phi.to_radians()
    } else {
        phi
    }
}

fn phase_out(cli: &Cli, phi: f64) -> f64 {
    if cli.degrees {
        phi.to_degrees()
    } else {
        phi
    }
}

fn phase_column(cli: &Cli) -> &'static str {
    if cli.degrees {
        "phi_deg"
    } else {
        "phi_rad"
    }
}

/// `points` phases spanning [-pi, pi] inclusive.
pub fn phase_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| -PI + 2.0 * PI * i as f64 / (points - 1) as f64).collect(),
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let spec: Option<ObservableSpec> = args.observable.as_deref().map(str::parse).transpose()?;
    let default_n = spec.as_ref().map_or(2, ObservableSpec::len);
    let config = resolve(cli, &args.config, default_n)?;
    let n = config.n_photons;
    let spec = match spec {
        Some(s) => s,
        None => ObservableSpec::all_x(n)?,
    };
    spec.validate_for(n)?;
    let phis = match args.phi {
        Some(p) => vec![phase_in(cli, p)],
        None => phase_grid(args.points),
    };
    let state = match args.engine {
        Engine::A => Some(simulate_chain(n, config.pair_vis)?),
        Engine::B => None,
    };
    let mut rows = Vec::new();
    for &phi in &phis {
        let (value, weight) = match &state {
            Some(s) => (s.expectation(&spec, phi)?, None),
            None => {
                let e = full_expectation(&config, &spec, phi)?;
                (e.value, Some(e.weight))
            }
        };
        rows.push((phi, value, weight));
    }
    let mut w = sink(cli, "simulate.out")?;
    match cli.format {
        Format::Csv => {
            write!(w, "{},expectation", phase_column(cli))?;
            writeln!(w, "{}", if state.is_none() { ",weight" } else { "" })?;
            for (phi, value, weight) in rows {
                write!(w, "{},{value}", phase_out(cli, phi))?;
                match weight {
                    Some(p) => writeln!(w, ",{p}")?,
                    None => writeln!(w)?,
                }
            }
        }
        Format::Json => {
            let points: Vec<_> = rows
                .iter()
                .map(|&(phi, value, weight)| json!({ "phi": phase_out(cli, phi), "value": value, "weight": weight }))
                .collect();
            let doc = json!({
                "observable": spec.to_string(),
                "engine": if state.is_some() { "a" } else { "b" },
                "config": config,
                "points": points,
            });
            writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn exact_curve(config: &ExperimentConfig, kind: CurveKind, phis: &[f64], engine: Engine) -> Result<VisibilityCurve> {
    let config = ExperimentConfig { n_photons: kind.n_photons(), ..config.clone() };
    let spec = kind.observable();
    let state = match engine {
        Engine::A => Some(simulate_chain(config.n_photons, config.pair_vis)?),
        Engine::B => None,
    };
    let points = phis
        .iter()
        .map(|&phi| {
            let mean = match &state {
                Some(s) => s.expectation(&spec, phi)?,
                None => full_expectation(&config, &spec, phi)?.value,
            };
            Ok(CurvePoint::exact(phi, mean))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_visibility(&points, kind)?)
}

fn fit_line(cli: &Cli, fit: &FitResult) -> String {
    format!(
        "amplitude={:.6} amplitude_err={:.3e} phase_offset={:.6} phase_offset_err={:.3e} chi2={:.3e} dof={}",
        fit.amplitude,
        fit.amplitude_err,
        phase_out(cli, fit.phase_offset),
        phase_out(cli, fit.phase_offset_err),
        fit.chi2,
        fit.dof
    )
}

fn scan(cli: &Cli, args: &ScanArgs) -> Result<()> {
    let config = resolve(cli, &args.config, 2)?;
    let kinds = args.kinds.iter().map(|k| k.parse::<CurveKind>()).collect::<Result<Vec<_>, _>>()?;
    let phis = phase_grid(args.points);
    let curves = kinds
        .iter()
        .map(|&k| exact_curve(&config, k, &phis, args.engine))
        .collect::<Result<Vec<_>>>()?;
    match (cli.format, &cli.out) {
        (Format::Json, None) => {
            let mut w = sink(cli, "")?;
            writeln!(w, "{}", serde_json::to_string_pretty(&curves)?)?;
            w.flush()?;
        }
        (Format::Csv, None) => {
            let mut w = sink(cli, "")?;
            for c in &curves {
                writeln!(w, "# curve {} {}", c.kind.name(), fit_line(cli, &c.fit))?;
                write_curve_csv(&mut w, &c.points, cli.degrees)?;
            }
            w.flush()?;
        }
        (_, Some(_)) => {
            for c in &curves {
                let mut w = sink(cli, &format!("{}.csv", c.kind.name()))?;
                write_curve_csv(&mut w, &c.points, cli.degrees)?;
                w.flush()?;
                let mut w = sink(cli, &format!("{}.fit.json", c.kind.name()))?;
                writeln!(w, "{}", serde_json::to_string_pretty(&c.fit)?)?;
                w.flush()?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PpsRow {
    position: usize,
    slots: Vec<usize>,
    fit: FitResult,
    mean_weight: f64,
}

/// (last > first, first > every window in between).
fn ordering(rows: &[PpsRow]) -> (bool, bool) {
    let first = rows.first().map(|r| r.fit.amplitude);
    let last = rows.last().map(|r| r.fit.amplitude);
    let (Some(first), Some(last)) = (first, last) else { return (false, false) };
    let middle = rows[1..rows.len().saturating_sub(1)].iter().map(|r| r.fit.amplitude);
    let first_above_middle = middle.clone().all(|a| first > a);
    (last > first, first_above_middle && rows.len() > 2)
}

fn pps(cli: &Cli, args: &PpsArgs) -> Result<()> {
    let config = resolve(cli, &args.config, 6)?;
    let n = config.n_photons;
    let windows = pps_windows(n, args.m)?;
    let spec = ObservableSpec::all_x(args.m)?;
    let kind = CurveKind::for_observable(&spec).ok_or_else(|| anyhow!("no curve model for {spec}"))?;
    let phis = phase_grid(args.points);

    let mut values = vec![Vec::new(); windows.len()];
    let mut weights = vec![0.0; windows.len()];
    for &phi in &phis {
        let engine = ModeEngine::from_config(&config.with_phi(phi), &NetworkOptions::default(), Distinguishability::default())?;
        for (i, window) in windows.iter().enumerate() {
            let e = window_expectation(&engine, window, &spec)?;
            values[i].push(CurvePoint::exact(phi, e.value));
            weights[i] += e.weight / phis.len() as f64;
        }
    }
    let rows = windows
        .iter()
        .zip(values)
        .zip(weights)
        .map(|((window, points), mean_weight)| {
            let mut slots = window.slots.clone();
            slots.extend(window.final_slots);
            Ok(PpsRow { position: window.position, slots, fit: fit_visibility(&points, kind)?.fit, mean_weight })
        })
        .collect::<Result<Vec<_>>>()?;
    let full = exact_curve(&config, kind, &phis, Engine::B)?.fit;
    let (last_first, first_middle) = ordering(&rows);
    let below_full = rows.iter().all(|r| r.fit.amplitude < full.amplitude);

    let mut w = sink(cli, if cli.format == Format::Json { "pps.json" } else { "pps.csv" })?;
    match cli.format {
        Format::Csv => {
            writeln!(w, "position,amplitude,amplitude_err,phase_offset,mean_weight")?;
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.position,
                    r.fit.amplitude,
                    r.fit.amplitude_err,
                    phase_out(cli, r.fit.phase_offset),
                    r.mean_weight
                )?;
            }
            writeln!(w, "# full-selection {}-photon amplitude={}", args.m, full.amplitude)?;
            writeln!(w, "# last > first: {last_first}")?;
            writeln!(w, "# first > middle: {first_middle}")?;
            writeln!(w, "# all below full selection: {below_full}")?;
        }
        Format::Json => {
            let doc = json!({
                "n_photons": n,
                "m_selected": args.m,
                "kind": kind,
                "windows": rows,
                "full_selection": full,
                "last_above_first": last_first,
                "first_above_middle": first_middle,
                "all_below_full": below_full,
            });
            writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn rates(cli: &Cli, args: &RatesArgs) -> Result<()> {
    let model = RateModel::anchored(args.eta_sp, args.eta_setup, args.eta_det, args.eta_ent, &reference::MEASURED_RATES_HZ)?;
    let r = scaling_ratio(&model)?;
    let predicted = predict_rates(&model, &args.n_list)?;
    let measured = step_ratios(&reference::MEASURED_RATES_HZ);
    let mut w = sink(cli, if cli.format == Format::Json { "rates.json" } else { "rates.csv" })?;
    match cli.format {
        Format::Csv => {
            writeln!(w, "r = {r:.2}")?;
            writeln!(w, "n,predicted_hz")?;
            for (n, rate) in args.n_list.iter().zip(&predicted) {
                writeln!(w, "{n},{rate:.6e}")?;
            }
            writeln!(w, "n_from,n_to,measured_step,predicted_step")?;
            for (a, b, step) in &measured {
                writeln!(w, "{a},{b},{step:.2},{r:.2}")?;
            }
        }
        Format::Json => {
            let doc = json!({
                "r": r,
                "model": model,
                "predicted": args.n_list.iter().zip(&predicted).map(|(n, p)| json!({"n": n, "rate_hz": p})).collect::<Vec<_>>(),
                "measured_steps": measured.iter().map(|(a, b, s)| json!({"from": a, "to": b, "ratio": s})).collect::<Vec<_>>(),
            });
            writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sample(cli: &Cli, args: &SampleArgs) -> Result<()> {
    let config = resolve(cli, &args.config, 2)?;
    let i = config.interleave_factor as u64;
    let trials = args.trials.div_ceil(i) * i;
    let phis = match args.phi {
        Some(p) => vec![phase_in(cli, p)],
        None => phase_grid(args.points),
    };
    let drifts = match (args.drift.len(), args.scans) {
        (0, s) => vec![0.0; s],
        (d, s) if d == s || s == 1 => args.drift.iter().map(|&p| phase_in(cli, p)).collect(),
        (d, s) => bail!("{d} drift values given for {s} scans"),
    };
    let schedule = ScanSchedule::scans(&phis, trials, &drifts);
    schedule.validate(config.interleave_factor)?;

    let blocks = args.blocks.max(1);
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, blocks);
    let options = SamplerOptions::default();
    let mut per_block = vec![Vec::new(); blocks];
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (config, schedule) = (&config, &schedule);
                scope.spawn(move || {
                    (t..blocks)
                        .step_by(threads)
                        .map(|b| Ok((b, sample_worker(config, schedule, options, cli.seed, b, blocks)?)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        for h in handles {
            for (b, trials) in h.join().map_err(|_| anyhow!("sampler thread panicked"))?? {
                per_block[b] = trials;
            }
        }
        Ok(())
    })?;
    let all: Vec<_> = per_block.into_iter().flatten().collect();
    let items = assemble_stream(&SequenceLayout::from_config(&config), &schedule, &all);
    let w = sink(cli, "stream.csv")?;
    write_stream(w, &config, &items)?;
    Ok(())
}

fn parse_window(text: &str, n: usize) -> Result<MonitorWindow> {
    let (geometry, observable) = match text.split_once('=') {
        Some((g, o)) => (g, Some(o.parse::<ObservableSpec>()?)),
        None => (text, None),
    };
    let window = if geometry == "full" {
        SelectionWindow::full(n)?
    } else if let Some(m) = geometry.strip_prefix("last:") {
        SelectionWindow::last(n, m.parse().context("window size")?)?
    } else if let Some(rest) = geometry.strip_prefix("pps:") {
        let (m, p) = rest.split_once('@').ok_or_else(|| anyhow!("expected pps:M@P, got {text}"))?;
        SelectionWindow::new(n, m.parse().context("window size")?, p.parse().context("window position")?)?
    } else {
        bail!("unknown window `{text}` (expected full, last:M or pps:M@P)");
    };
    let spec = match observable {
        Some(s) => s,
        None => ObservableSpec::all_x(window.m_selected)?,
    };
    Ok(MonitorWindow::new(window, spec)?)
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let input: Box<dyn stdio::BufRead> = if args.input == Path::new("-") {
        Box::new(stdio::stdin().lock())
    } else {
        let f = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
        Box::new(BufReader::new(f))
    };
    let (header, reader) = StreamReader::open(input)?;
    let base = match (&cli.config, header) {
        (Some(path), _) => read_config(path)?,
        (None, Some(h)) => h,
        (None, None) => ExperimentConfig::default(),
    };
    let config = args.config.apply(base)?;
    let mut layout = SequenceLayout::from_config(&config);
    if let Some(t) = args.tolerance {
        layout.tolerance = t;
    }
    let windows = args
        .windows
        .iter()
        .map(|w| parse_window(w, config.n_photons))
        .collect::<Result<Vec<_>>>()?;

    let mut status: Box<dyn Write> = match &args.status {
        Some(p) if p == Path::new("-") => Box::new(stdio::stdout().lock()),
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdio::stderr().lock()),
    };
    let mut monitor = Monitor::new(layout, windows, args.reference, args.snapshot_every)?;
    for item in reader {
        if let Some(snap) = monitor.push(item?) {
            writeln!(status, "{}", serde_json::to_string(&snap)?)?;
        }
    }
    status.flush()?;
    drop(status);
    let state = monitor.finish();
    for s in &state.skipped {
        eprintln!("warning: fit skipped: {s}");
    }
    let stats = state.stats;
    eprintln!(
        "records={} binned={} unbinned={} out_of_order={} bad_channel={}",
        stats.records, stats.binned, stats.unbinned, stats.out_of_order, stats.bad_channel
    );
    let alignment = match args.align {
        Some(target) => match align_scans(&state, target) {
            Ok(a) => Some(a),
            Err(e) => {
                eprintln!("warning: alignment skipped: {e}");
                None
            }
        },
        None => None,
    };
    let snap = state.snapshot();

    match cli.format {
        Format::Json => {
            let scans: Vec<_> = state
                .scans
                .iter()
                .map(|s| json!({ "scan": s.scan, "trials": s.trials, "fits": s.fits }))
                .collect();
            let doc = json!({
                "status": snap,
                "scans": scans,
                "skipped": state.skipped,
                "alignment": alignment,
            });
            let mut w = sink(cli, "analysis.json")?;
            writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)?;
            w.flush()?;
        }
        Format::Csv => {
            let mut w = sink(cli, "analysis.csv")?;
            writeln!(
                w,
                "window,kind,matched,rate_per_trial,amplitude,amplitude_err,phase_offset,phase_offset_err,chi2,dof"
            )?;
            for ws in &snap.windows {
                write!(w, "{},{},{},{}", ws.label, ws.kind.name(), ws.matched, ws.rate_per_trial)?;
                match &ws.fit {
                    Some(f) => writeln!(
                        w,
                        ",{},{},{},{},{},{}",
                        f.amplitude,
                        f.amplitude_err,
                        phase_out(cli, f.phase_offset),
                        phase_out(cli, f.phase_offset_err),
                        f.chi2,
                        f.dof
                    )?,
                    None => writeln!(w, ",,,,,,")?,
                }
            }
            for (scan, offset) in &snap.phase_track {
                writeln!(w, "# phase_track scan={scan} phase_offset={}", phase_out(cli, *offset))?;
            }
            if let Some(a) = &alignment {
                writeln!(w, "# aligned {}", fit_line(cli, &a.aligned.fit))?;
                writeln!(w, "# naive {}", fit_line(cli, &a.naive.fit))?;
            }
            w.flush()?;
            if cli.out.is_some() {
                for (i, ws) in snap.windows.iter().enumerate() {
                    let mut w = sink(cli, &format!("window{i}.csv"))?;
                    write_curve_csv(&mut w, &points_from_counts(&ws.counts), cli.degrees)?;
                    w.flush()?;
                }
            }
        }
    }
    Ok(())
}
