use crate::config::{ensure_dir, parse_f64_list, parse_u64_list, Resolver};
use crate::{SweepArgs, EXIT_OK};
use mechdis_core::error::{CoreError, Result};
use mechdis_core::metrics::{evaluate, random_baseline, supervised_baseline};
use mechdis_core::synth::{load_dataset, DatasetMeta, SequenceBatch};
use mechdis_core::train::{train, TrainConfig};
use std::io::Write;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

#[derive(Clone, Debug)]
struct Job {
    kind: Kind,
    alpha_a: f64,
    alpha_z: f64,
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Run,
    Supervised,
    Random,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Run => "run",
            Kind::Supervised => "supervised",
            Kind::Random => "random",
        }
    }
}

#[derive(Clone, Debug)]
struct Row {
    job: Job,
    mcc: Option<f64>,
    linear_score: Option<f64>,
    elbo: Option<f64>,
    shd_a: Option<usize>,
    shd_z: Option<usize>,
    status: String,
}

const HEADER: &str = "kind,alpha_a,alpha_z,seed,mcc,linear_score,elbo,shd_a,shd_z,status\n";

fn format_row(r: &Row) -> String {
    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        r.job.kind.name(),
        r.job.alpha_a,
        r.job.alpha_z,
        r.job.seed,
        opt_f(r.mcc),
        opt_f(r.linear_score),
        opt_f(r.elbo),
        opt_u(r.shd_a),
        opt_u(r.shd_z),
        r.status
    )
}

fn run_job(
    job: &Job,
    data: &SequenceBatch,
    meta: &DatasetMeta,
    base: &TrainConfig,
    run_dir: Option<&PathBuf>,
) -> Result<Row> {
    let mut config = base.clone();
    config.alpha_a = job.alpha_a;
    config.alpha_z = job.alpha_z;
    config.seed = job.seed;
    let mut row = Row {
        job: job.clone(),
        mcc: None,
        linear_score: None,
        elbo: None,
        shd_a: None,
        shd_z: None,
        status: "ok".into(),
    };
    match job.kind {
        Kind::Run => {
            let dir = run_dir.map(|d| {
                d.join(format!("run_aa{}_az{}_s{}", job.alpha_a, job.alpha_z, job.seed))
            });
            let outcome = train(data, meta.sigma, &config, dir.as_deref())?;
            if let Some(dir) = &dir {
                outcome.log.write_csv(&dir.join("log.csv"))?;
            }
            let report = evaluate(data, meta, &outcome.params, &config)?;
            if let Some(dir) = &dir {
                std::fs::write(dir.join("report.json"), report.to_json())
                    .map_err(|e| CoreError::io(dir.display().to_string(), e))?;
            }
            row.mcc = Some(report.mcc);
            row.linear_score = Some(report.linear_score);
            row.elbo = Some(report.elbo_test);
            row.shd_a = Some(report.shd_a);
            row.shd_z = Some(report.shd_z);
        }
        Kind::Supervised => {
            let (mcc, _params) = supervised_baseline(data, meta.sigma, &config)?;
            row.mcc = Some(mcc);
        }
        Kind::Random => {
            row.mcc = Some(random_baseline(data, meta.sigma, &config)?);
        }
    }
    Ok(row)
}

pub fn run(args: SweepArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let data_dir = cfg.path(args.data.clone(), "data")?;
    let out = cfg.path(args.out.clone(), "out")?;
    let alpha_a = parse_f64_list(&cfg.get(args.alpha_a.clone(), "alpha-a", "0".to_string()))?;
    let alpha_z = parse_f64_list(&cfg.get(args.alpha_z.clone(), "alpha-z", "0".to_string()))?;
    let seeds = parse_u64_list(&cfg.get(args.seeds.clone(), "seeds", "0,1,2".to_string()))?;
    let jobs_n = cfg.get(args.jobs, "jobs", 1).max(1);
    let run_dir = args.run_dir.clone();
    if let Some(d) = &run_dir {
        ensure_dir(d)?;
    }

    let defaults = TrainConfig::default();
    let base = TrainConfig {
        epochs: cfg.get(args.epochs, "epochs", defaults.epochs),
        lr: cfg.get(args.lr, "lr", defaults.lr),
        batch_size: cfg.get(args.batch_size, "batch-size", defaults.batch_size),
        holdout_frac: cfg.get(args.holdout, "holdout", defaults.holdout_frac),
        arch: mechdis_core::model::Architecture {
            enc_hidden: cfg.get(args.enc_hidden, "enc-hidden", defaults.arch.enc_hidden),
            enc_layers: cfg.get(args.enc_layers, "enc-layers", defaults.arch.enc_layers),
            trans_hidden: cfg.get(args.trans_hidden, "trans-hidden", defaults.arch.trans_hidden),
            trans_layers: cfg.get(args.trans_layers, "trans-layers", defaults.arch.trans_layers),
            ..defaults.arch.clone()
        },
        ..defaults
    };
    base.validate()?;

    let (data, meta) = load_dataset(&data_dir)?;
    let mut jobs: Vec<Job> = Vec::new();
    for &aa in &alpha_a {
        for &az in &alpha_z {
            for &seed in &seeds {
                jobs.push(Job { kind: Kind::Run, alpha_a: aa, alpha_z: az, seed });
            }
        }
    }
    for &seed in &seeds {
        jobs.push(Job { kind: Kind::Supervised, alpha_a: 0.0, alpha_z: 0.0, seed });
        jobs.push(Job { kind: Kind::Random, alpha_a: 0.0, alpha_z: 0.0, seed });
    }

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let mut file = std::fs::File::create(&out)
        .map_err(|e| CoreError::io(out.display().to_string(), e))?;
    file.write_all(HEADER.as_bytes())
        .map_err(|e| CoreError::io(out.display().to_string(), e))?;

    // a single writer appends rows as jobs finish; workers pull from a queue
    let queue = Arc::new(Mutex::new(jobs.clone().into_iter().enumerate().collect::<Vec<_>>()));
    let (tx, rx) = mpsc::channel::<(usize, Row)>();
    let mut rows: Vec<Option<Row>> = vec![None; jobs.len()];
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..jobs_n.min(jobs.len().max(1)) {
            let queue = Arc::clone(&queue);
            let tx = tx.clone();
            let data_ref = &data;
            let meta_ref = &meta;
            let base_ref = &base;
            let run_dir_ref = run_dir.as_ref();
            scope.spawn(move || loop {
                let next = queue.lock().unwrap().pop();
                let Some((idx, job)) = next else { break };
                let row = match run_job(&job, data_ref, meta_ref, base_ref, run_dir_ref) {
                    Ok(row) => row,
                    Err(err) => {
                        eprintln!("job {job:?} failed: {err}");
                        Row {
                            job,
                            mcc: None,
                            linear_score: None,
                            elbo: None,
                            shd_a: None,
                            shd_z: None,
                            status: "failed".into(),
                        }
                    }
                };
                if tx.send((idx, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (idx, row) in rx {
            file.write_all(format_row(&row).as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| CoreError::io(out.display().to_string(), e))?;
            rows[idx] = Some(row);
        }
        Ok(())
    })?;

    // rewrite in canonical order so identical invocations give identical bytes
    let mut final_rows: Vec<Row> = rows.into_iter().flatten().collect();
    final_rows.sort_by(|a, b| {
        (a.job.kind, a.job.alpha_a, a.job.alpha_z, a.job.seed)
            .partial_cmp(&(b.job.kind, b.job.alpha_a, b.job.alpha_z, b.job.seed))
            .unwrap()
    });
    let mut content = String::from(HEADER);
    for r in &final_rows {
        content.push_str(&format_row(r));
    }
    std::fs::write(&out, content).map_err(|e| CoreError::io(out.display().to_string(), e))?;
    println!("wrote {} ({} rows)", out.display(), final_rows.len());
    Ok(EXIT_OK)
}
