use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use treenn::dataset::write_examples;
use treenn::tasks::{
    decode_bits4, encode_prop, eval_arith, gen_arith_dataset, gen_prop_problems, load_arith_dataset,
    load_entailment_dataset, load_prop_dataset, value_mod16, ArithGenParams, ArithStats, PropGenParams,
};
use treenn::train::is_accurate;
use treenn::{
    collect_signatures, load_tnn, parse_term, random_tnn, save_tnn, signatures_for, train_tnn_with, Criterion, Example,
    Schedule, TrainOptions, DEFAULT_HEAD,
};

use crate::{EvalArgs, GenArithArgs, GenPropArgs, PredictArgs, Task, TrainArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] treenn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(treenn::Error::NonFinite(_)) => 3,
            CliError::Lib(_) => 2,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| treenn::Error::io(path, e).into())
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| treenn::Error::io(dir, e).into())
}

pub fn gen_arith(a: &GenArithArgs) -> CliResult {
    if a.max_depth == 0 {
        return Err(usage("--max-depth must be at least 1"));
    }
    let p = ArithGenParams {
        n_train: a.train_count,
        n_test: a.test_count,
        max_leaf: a.max_leaf,
        max_depth: a.max_depth,
        seed: a.seed,
    };
    let (train, test) = gen_arith_dataset(&p)?;
    create_dir(&a.out_dir)?;
    write_examples(&a.out_dir.join("train.txt"), &train)?;
    write_examples(&a.out_dir.join("test.txt"), &test)?;
    let stats = ArithStats::from_examples(&train).to_text("train") + &ArithStats::from_examples(&test).to_text("test");
    write_file(&a.out_dir.join("stats.txt"), &stats)?;
    log::info!("wrote {} train and {} test examples to {}", train.len(), test.len(), a.out_dir.display());
    Ok(())
}

pub fn gen_prop(a: &GenPropArgs) -> CliResult {
    if a.max_vars == 0 {
        return Err(usage("--max-vars must be at least 1"));
    }
    let p = PropGenParams {
        n_train: a.train_count,
        n_test: a.test_count,
        max_vars: a.max_vars,
        max_depth: a.max_depth,
        seed: a.seed,
    };
    let (train, test) = gen_prop_problems(&p)?;
    let encode = |ps: &[treenn::tasks::PropProblem]| ps.iter().map(encode_prop).collect::<treenn::Result<Vec<_>>>();
    create_dir(&a.out_dir)?;
    write_examples(&a.out_dir.join("train.txt"), &encode(&train)?)?;
    write_examples(&a.out_dir.join("test.txt"), &encode(&test)?)?;
    log::info!("wrote {} train and {} test problems to {}", train.len(), test.len(), a.out_dir.display());
    Ok(())
}

/// Encoded `term | label` files never contain commas; upstream entailment lines always do.
fn looks_like_entailment_csv(path: &Path) -> CliResult<bool> {
    let text = fs::read_to_string(path).map_err(|e| treenn::Error::io(path, e))?;
    Ok(text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).is_some_and(|l| l.contains(',')))
}

fn load_data(path: &Path, task: Task) -> CliResult<Vec<Example>> {
    Ok(match task {
        Task::Arith => load_arith_dataset(path)?,
        Task::Prop if looks_like_entailment_csv(path)? => {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            load_entailment_dataset(path, &name)?.examples
        }
        Task::Prop => load_prop_dataset(path)?,
    })
}

fn criterion(task: Task) -> Criterion {
    match task {
        Task::Arith => Criterion::Arith,
        Task::Prop => Criterion::Prop,
    }
}

fn default_report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.txt");
    PathBuf::from(s)
}

pub fn train(a: &TrainArgs) -> CliResult {
    if a.dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    if a.hidden == 0 {
        return Err(usage("--hidden must be at least 1"));
    }
    if a.ncore == 0 {
        return Err(usage("--ncore must be at least 1"));
    }
    let schedule = match &a.schedule {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| treenn::Error::io(path, e))?;
            Schedule::parse(&text, a.ncore)?
        }
        None => Schedule::standard(a.ncore),
    };
    let train = load_data(&a.train, a.task)?;
    let test = match &a.test {
        Some(p) => load_data(p, a.task)?,
        None => Vec::new(),
    };
    let Some(first) = train.first() else {
        return Err(treenn::Error::InvalidArgument(format!("{}: no training examples", a.train.display())).into());
    };
    let out_size = first.target().map_or(0, <[f64]>::len);
    let arities = collect_signatures(train.iter().chain(&test).map(|e| &e.term))?;
    let initial = random_tnn(&signatures_for(&arities, out_size, &[a.hidden]), a.dim, a.seed)?;
    log::info!(
        "training on {} examples ({} test), {} parameters, {} epochs",
        train.len(),
        test.len(),
        initial.parameter_count(),
        schedule.total_epochs()
    );
    let opts = TrainOptions { seed: a.seed, criterion: criterion(a.task), objective: a.objective };
    let (tnn, report) = train_tnn_with(&schedule, &initial, &train, &test, opts)?;
    save_tnn(&tnn, &a.out)?;
    let report_path = a.report.clone().unwrap_or_else(|| default_report_path(&a.out));
    let text = report.to_text();
    write_file(&report_path, &text)?;
    if let Some(ev) = report.final_evaluation() {
        println!("train accuracy {:.2}% ({}/{})", ev.train.percent(), ev.train.correct, ev.train.total);
        println!("test accuracy {:.2}% ({}/{})", ev.test.percent(), ev.test.correct, ev.test.total);
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult {
    let tnn = load_tnn(&a.weights)?;
    let data = load_data(&a.data, a.task)?;
    let crit = criterion(a.task);
    let mut correct = 0;
    let mut per_class = [(0usize, 0usize); 16];
    for ex in &data {
        let ok = is_accurate(&tnn, ex, crit)?;
        correct += usize::from(ok);
        if a.task == Task::Arith {
            let class = decode_bits4(ex.target().unwrap_or_default()) as usize;
            per_class[class].0 += usize::from(ok);
            per_class[class].1 += 1;
        }
    }
    let mut out = String::new();
    let pct = if data.is_empty() { 100.0 } else { 100.0 * correct as f64 / data.len() as f64 };
    let _ = writeln!(out, "accuracy {pct:.2}% ({correct}/{})", data.len());
    if a.task == Task::Arith {
        for (c, (ok, n)) in per_class.iter().enumerate() {
            let p = if *n == 0 { 0.0 } else { 100.0 * *ok as f64 / *n as f64 };
            let _ = writeln!(out, "class {c:2} {p:6.2}% ({ok}/{n})");
        }
    }
    print!("{out}");
    Ok(())
}

pub fn predict(a: &PredictArgs) -> CliResult {
    let tnn = load_tnn(&a.weights)?;
    let term = parse_term(&a.term)?;
    let head = if tnn.heads().contains_key(DEFAULT_HEAD) {
        DEFAULT_HEAD.to_string()
    } else {
        tnn.heads().keys().next().cloned().ok_or_else(|| treenn::Error::UnknownHead(DEFAULT_HEAD.into()))?
    };
    let out = tnn.infer(&term, &head)?;
    let shown: Vec<String> = out.iter().map(|v| format!("{v:.6}")).collect();
    println!("{}", shown.join(" "));
    if out.len() == 4 {
        println!("decoded {}", decode_bits4(&out));
        if let Ok(v) = eval_arith(&term) {
            println!("expected {}", value_mod16(&v));
        }
    }
    Ok(())
}
