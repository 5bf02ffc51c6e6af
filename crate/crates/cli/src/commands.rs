use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use somnoscore::arch::{param_count, shape_propagate, Checkpoint, ModelConfig, SaveMetrics};
use somnoscore::ensemble::{
    compare, comparison_csv, ensemble_scores, enumerate_subsets, score_matrix, EnsembleSpec, Member, MemberRef,
};
use somnoscore::metrics::{argmax, ConfusionMatrix, MetricsReport};
use somnoscore::sigdata::{
    hypnogram_token, manifest_read, manifest_read_subset, manifest_write, parse_signals, read_manifest, signals_name,
    split_patients, synth_dataset, ChannelKind, Recording, SleepStage, SplitRatios, SplitSpec, SynthSpec,
    MANIFEST_FILE,
};
use somnoscore::train::{fit, TrainConfig};
use somnoscore::{fsutil, Error};

use crate::run_manifest::{RunRecorder, RUN_MANIFEST_FILE};
use crate::svg;
use crate::{DataSelection, EnsembleArgs, EvalArgs, ParamsArgs, ReportArgs, SplitArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

fn manifest_beside(file: &Path) -> PathBuf {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.with_file_name(format!("{stem}.{RUN_MANIFEST_FILE}"))
}

fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::BadArg(format!("--ratios `{text}`: {e}")))?;
    match parts[..] {
        [train, val, test] => Ok(SplitRatios { train, val, test }),
        _ => Err(Error::BadArg(format!("--ratios needs three values, got `{text}`")).into()),
    }
}

fn read_split(path: &Path) -> Result<SplitSpec> {
    let split: SplitSpec = fsutil::read_json(path)?;
    split.check_disjoint()?;
    Ok(split)
}

fn load_model_config(path: Option<&Path>, kinds: &[ChannelKind]) -> Result<ModelConfig> {
    let config = match path {
        Some(p) => fsutil::read_json::<ModelConfig>(p)?,
        None => ModelConfig::reference(kinds.len()),
    };
    if config.input_channels != kinds.len() {
        return Err(Error::Config(format!(
            "config expects {} input channels but --signals lists {}",
            config.input_channels,
            kinds.len()
        ))
        .into());
    }
    Ok(config)
}

fn load_selection(sel: &DataSelection, run: &mut RunRecorder) -> Result<Vec<Recording>> {
    run.input(&sel.data);
    let recs = match &sel.split {
        Some(split) => {
            run.input(split);
            manifest_read_subset(&sel.data, read_split(split)?.part(sel.part))?
        }
        None => manifest_read(&sel.data)?,
    };
    if recs.is_empty() {
        return Err(Error::NoData("no recordings selected".into()).into());
    }
    Ok(recs)
}

fn zscore_all(recs: Vec<Recording>) -> Vec<Recording> {
    recs.iter().map(Recording::z_scored).collect()
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::new(a.patients, a.epochs, a.seed.seed);
    spec.excluded_prob = a.excluded_prob;
    let mut run = RunRecorder::start("synth", Some(a.seed.seed), serde_json::to_value(&spec)?);
    let recs = synth_dataset(&spec)?;
    let manifest = manifest_write(&recs, &a.out)?;
    run.output(&a.out.join(MANIFEST_FILE));
    for p in &manifest.patients {
        for file in p.channels.values().chain(std::iter::once(&p.hypnogram)) {
            run.output(&a.out.join(file));
        }
    }
    run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
    eprintln!("wrote {} recordings to {}", recs.len(), a.out.display());
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let mut run = RunRecorder::start(
        "split",
        Some(a.seed.seed),
        json!({ "ratios": [ratios.train, ratios.val, ratios.test] }),
    );
    run.input(&a.data);
    let manifest = read_manifest(&a.data)?;
    let ids: Vec<String> = manifest.patients.iter().map(|p| p.id.clone()).collect();
    let split = split_patients(&ids, ratios, a.seed.seed)?;
    fsutil::write_json(&a.out, &split)?;
    run.output(&a.out);
    run.finish(&manifest_beside(&a.out))?;
    eprintln!(
        "{} patients: {} train / {} val / {} test",
        ids.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let kinds = parse_signals(&a.signals)?;
    let config = load_model_config(a.config.as_deref(), &kinds)?;
    let tcfg = TrainConfig {
        learning_rate: a.learning_rate,
        max_iterations: a.iterations,
        batch_size: a.batch_size,
        patience: a.patience,
        patients_per_batch: a.patients_per_batch,
        seed: a.seed.seed,
    };
    tcfg.validate()?;
    let mut run = RunRecorder::start(
        "train",
        Some(tcfg.seed),
        json!({
            "signals": signals_name(&kinds),
            "channels": kinds,
            "model": config,
            "train": tcfg,
            "zscore": a.zscore,
        }),
    );
    run.input(&a.data);
    run.input(&a.split);
    let split = read_split(&a.split)?;
    let mut train_recs = manifest_read_subset(&a.data, &split.train)?;
    let mut val_recs = manifest_read_subset(&a.data, &split.val)?;
    if a.zscore {
        train_recs = zscore_all(train_recs);
        val_recs = zscore_all(val_recs);
    }
    let outcome = fit(&config, &kinds, &tcfg, &train_recs, &val_recs, |r| {
        eprintln!(
            "iteration {:>3}: train loss {:.5}, val loss {:.5} ({:.1} s)",
            r.iteration, r.train_loss, r.val_loss, r.seconds
        );
    })?;
    let best = outcome.history.best();
    let mut ck = Checkpoint::new(
        config,
        kinds,
        tcfg.seed,
        outcome.params,
        Some(SaveMetrics {
            best_iteration: best.iteration,
            train_loss: best.train_loss,
            val_loss: best.val_loss,
        }),
    )?;
    ck.header.zscore = a.zscore;
    let ck_path = a.out.join(CHECKPOINT_FILE);
    ck.save(&ck_path)?;
    let hist_path = a.out.join("history.csv");
    outcome.history.write_csv(&hist_path)?;
    run.output(&ck_path);
    run.output(&hist_path);
    run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
    eprintln!(
        "best iteration {} (val loss {:.5}), stopped by {:?}; wrote {}",
        best.iteration,
        best.val_loss,
        outcome.history.stop_reason,
        ck_path.display()
    );
    Ok(())
}

fn member_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_report(cm: &ConfusionMatrix, out: &Path, run: &mut RunRecorder) -> Result<MetricsReport> {
    let report = MetricsReport::from_matrix(cm)?;
    report.write(out)?;
    run.output(&out.join("metrics.json"));
    run.output(&out.join("confusion.csv"));
    Ok(report)
}

fn print_summary(report: &MetricsReport) {
    let kappa = report
        .kappa
        .map(|k| format!("{k:.4}"))
        .unwrap_or_else(|| "undefined".into());
    eprintln!(
        "{} epochs: accuracy {:.4}, kappa {kappa}, macro F1 {:.4}",
        report.total, report.accuracy, report.f1_macro
    );
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut run = RunRecorder::start("eval", None, json!({ "split_part": a.data.part, "model": a.model }));
    run.input(&a.model);
    let ck = Checkpoint::load(&a.model)?;
    let zscore = ck.header.zscore;
    let member = Member::from_checkpoint(member_name(&a.model), ck)?;
    let mut recs = load_selection(&a.data, &mut run)?;
    if zscore {
        recs = zscore_all(recs);
    }
    let mut cm = ConfusionMatrix::new();
    let mut hyp = String::from("patient_id,epoch,truth,predicted\n");
    for rec in &recs {
        let probs = member
            .predict_recording(rec)
            .with_context(|| format!("scoring `{}` with {}", rec.patient_id(), a.model.display()))?;
        for (e, p) in probs.iter().enumerate() {
            let predicted = SleepStage::ALL[argmax(p)];
            let truth = rec.hypnogram()[e];
            if let Some(t) = truth {
                cm.record(predicted, t);
            }
            writeln!(
                hyp,
                "{},{e},{},{}",
                rec.patient_id(),
                hypnogram_token(truth),
                predicted.token()
            )?;
        }
    }
    let report = write_report(&cm, &a.out, &mut run)?;
    let hyp_path = a.out.join("hypnogram.csv");
    fsutil::write_atomic(&hyp_path, hyp.as_bytes())?;
    run.output(&hyp_path);
    run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
    print_summary(&report);
    Ok(())
}

fn shared_zscore(members: &[(bool, Member)]) -> Result<bool> {
    let flags: BTreeSet<bool> = members.iter().map(|(z, _)| *z).collect();
    if flags.len() > 1 {
        bail!(Error::Config("ensemble members disagree on input z-scoring".into()));
    }
    Ok(flags.into_iter().next().unwrap_or(false))
}

fn load_member(r: &MemberRef) -> Result<(bool, Member)> {
    let ck = Checkpoint::load(&r.checkpoint)?;
    let z = ck.header.zscore;
    Ok((z, Member::load(r)?))
}

pub fn ensemble(a: EnsembleArgs) -> Result<()> {
    let mut run = RunRecorder::start(
        "ensemble",
        None,
        json!({ "models": a.models, "spec": a.spec, "sizes": a.sizes, "split_part": a.data.part }),
    );
    if let Some(spec_path) = &a.spec {
        run.input(spec_path);
        let spec = EnsembleSpec::read(spec_path)?;
        let loaded = spec.members.iter().map(load_member).collect::<Result<Vec<_>>>()?;
        let zscore = shared_zscore(&loaded)?;
        let mut recs = load_selection(&a.data, &mut run)?;
        if zscore {
            recs = zscore_all(recs);
        }
        let members: Vec<&Member> = loaded.iter().map(|(_, m)| m).collect();
        let scores = recs
            .iter()
            .map(|r| ensemble_scores(&members, r))
            .collect::<somnoscore::Result<Vec<_>>>()?;
        let report = write_report(&score_matrix(&scores, &recs), &a.out, &mut run)?;
        run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
        print_summary(&report);
        return Ok(());
    }

    let refs = a
        .models
        .iter()
        .map(|path| {
            let ck = Checkpoint::load(path)?;
            Ok(MemberRef {
                checkpoint: path.clone(),
                channels: ck.header.channels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let loaded = refs.iter().map(load_member).collect::<Result<Vec<_>>>()?;
    let zscore = shared_zscore(&loaded)?;
    let mut pool: Vec<Member> = loaded.into_iter().map(|(_, m)| m).collect();
    let stems: BTreeSet<&str> = pool.iter().map(|m| m.name.as_str()).collect();
    if stems.len() != pool.len() {
        for (m, r) in pool.iter_mut().zip(&refs) {
            m.name = r.checkpoint.display().to_string();
        }
    }
    for path in &a.models {
        run.input(path);
    }
    let sizes: BTreeSet<usize> = if a.sizes.is_empty() {
        (1..=pool.len().min(3)).collect()
    } else {
        a.sizes.iter().copied().collect()
    };
    let combos = enumerate_subsets(pool.len(), &sizes)?;
    let mut recs = load_selection(&a.data, &mut run)?;
    if zscore {
        recs = zscore_all(recs);
    }
    let rows = compare(&pool, &combos, &recs)?;
    let csv_path = a.out.join("comparison.csv");
    fsutil::write_atomic(&csv_path, comparison_csv(&rows).as_bytes())?;
    let best = EnsembleSpec {
        members: rows[0].indices.iter().map(|&i| refs[i].clone()).collect(),
    };
    let spec_path = a.out.join("ensemble.json");
    best.write(&spec_path)?;
    run.output(&csv_path);
    run.output(&spec_path);
    run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
    eprintln!(
        "{} ensembles ranked; best {} with macro F1 {:.4}",
        rows.len(),
        rows[0].members.join("+"),
        rows[0].report.f1_macro
    );
    Ok(())
}

fn cost_table(config: &ModelConfig, kinds: &[ChannelKind]) -> Result<String> {
    let cost = param_count(config)?;
    let shapes = shape_propagate(config)?;
    let mut s = String::new();
    writeln!(
        s,
        "model {} ({} x {} input values)",
        signals_name(kinds),
        config.input_channels,
        config.input_length()
    )?;
    writeln!(
        s,
        "{:>5} {:>3} {:>3} {:>2} {:>13} {:>13} {:>9} {:>9} {:>7} {:>14} {:>14} {:>7}",
        "block",
        "K",
        "F",
        "M",
        "input",
        "output",
        "depthw",
        "pointw",
        "params",
        "ops standard",
        "ops separable",
        "ratio"
    )?;
    for (i, (b, sh)) in cost.blocks.iter().zip(&shapes.blocks).enumerate() {
        let (std_ops, sep_ops) = match b.ops {
            Some(o) => (o.standard.to_string(), o.separable.to_string()),
            None => ("-".into(), "-".into()),
        };
        writeln!(
            s,
            "{:>5} {:>3} {:>3} {:>2} {:>13} {:>13} {:>9} {:>9} {:>7} {:>14} {:>14} {:>7.4}",
            i,
            b.spec.kernel,
            b.spec.filters,
            b.spec.pool,
            format!("{}x{}", sh.input.0, sh.input.1),
            format!("{}x{}", sh.pooled.0, sh.pooled.1),
            b.depthwise_params,
            b.pointwise_params,
            b.total_params,
            std_ops,
            sep_ops,
            b.ratio
        )?;
    }
    writeln!(s, "flatten {}", cost.flatten_size)?;
    writeln!(s, "classifier params {}", cost.classifier_params)?;
    writeln!(s, "total params {}", cost.total_params)?;
    Ok(s)
}

pub fn params(a: ParamsArgs) -> Result<()> {
    let kinds = parse_signals(&a.signals)?;
    let config = load_model_config(a.config.as_deref(), &kinds)?;
    let cost = param_count(&config)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&cost)?);
    } else {
        print!("{}", cost_table(&config, &kinds)?);
    }
    if let Some(out) = &a.out {
        let mut run = RunRecorder::start(
            "params",
            None,
            json!({ "signals": signals_name(&kinds), "model": config }),
        );
        if let Some(c) = &a.config {
            run.input(c);
        }
        let path = out.join("cost_report.json");
        fsutil::write_json(&path, &cost)?;
        run.output(&path);
        run.finish(&out.join(RUN_MANIFEST_FILE))?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()),
    }
}

fn csv_rows<'a>(path: &Path, text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => bail!(Error::Format {
            file: path.to_path_buf(),
            field: "line 1".into(),
            detail: format!("expected header `{header}`"),
        }),
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != width {
                bail!(Error::Format {
                    file: path.to_path_buf(),
                    field: format!("line {}", i + 1),
                    detail: format!("{} fields, expected {width}", cells.len()),
                });
            }
            Ok((i + 1, cells))
        })
        .collect()
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, cell: &str) -> Result<T> {
    cell.parse().map_err(|_| {
        Error::Format {
            file: path.to_path_buf(),
            field: format!("line {line}"),
            detail: format!("cannot parse `{cell}`"),
        }
        .into()
    })
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut run = RunRecorder::start("report", None, json!({}));
    let mut rendered = 0;

    let metrics_path = a.input.join("metrics.json");
    if metrics_path.exists() {
        run.input(&metrics_path);
        let report = MetricsReport::read(&metrics_path)?;
        let path = a.out.join("per_class.svg");
        fsutil::write_atomic(&path, svg::class_bars(&report).as_bytes())?;
        run.output(&path);
        rendered += 1;
    }

    let history_path = a.input.join("history.csv");
    if let Some(text) = read_text(&history_path)? {
        run.input(&history_path);
        let points = csv_rows(&history_path, &text, "iteration,train_loss,val_loss,seconds")?
            .into_iter()
            .map(|(line, c)| {
                Ok(svg::LossPoint {
                    iteration: parse_cell(&history_path, line, c[0])?,
                    train: parse_cell(&history_path, line, c[1])?,
                    val: parse_cell(&history_path, line, c[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let path = a.out.join("loss_curve.svg");
        fsutil::write_atomic(&path, svg::loss_curve(&points).as_bytes())?;
        run.output(&path);
        rendered += 1;
    }

    let hyp_path = a.input.join("hypnogram.csv");
    if let Some(text) = read_text(&hyp_path)? {
        run.input(&hyp_path);
        let rows = csv_rows(&hyp_path, &text, "patient_id,epoch,truth,predicted")?;
        let Some(first) = rows.first().map(|(_, c)| c[0]) else {
            bail!(Error::NoData(format!("{} has no rows", hyp_path.display())));
        };
        let mut truth = Vec::new();
        let mut predicted = Vec::new();
        for (line, c) in rows.iter().filter(|(_, c)| c[0] == first) {
            let t = somnoscore::sigdata::parse_hypnogram_token(c[2]).map_err(|d| Error::Format {
                file: hyp_path.clone(),
                field: format!("line {line}"),
                detail: d,
            })?;
            let p = somnoscore::sigdata::parse_hypnogram_token(c[3])
                .ok()
                .flatten()
                .ok_or_else(|| Error::Format {
                    file: hyp_path.clone(),
                    field: format!("line {line}"),
                    detail: format!("bad predicted stage `{}`", c[3]),
                })?;
            truth.push(t);
            predicted.push(p);
        }
        let path = a.out.join("hypnogram.svg");
        fsutil::write_atomic(&path, svg::hypnogram_strip(first, &truth, &predicted).as_bytes())?;
        run.output(&path);
        rendered += 1;
    }

    if rendered == 0 {
        bail!(Error::NoData(format!(
            "{} holds none of metrics.json, history.csv, hypnogram.csv",
            a.input.display()
        )));
    }
    run.finish(&a.out.join(RUN_MANIFEST_FILE))?;
    eprintln!("rendered {rendered} figure(s) into {}", a.out.display());
    Ok(())
}
