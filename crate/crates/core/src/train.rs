//! Schedule-driven mini-batch gradient descent and accuracy evaluation.

use std::fmt::{self, Write as _};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tnn::{Example, GradientStore, Objective, Tnn};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub nepoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub ncore: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    phases: Vec<Phase>,
}

impl Schedule {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Schedule("schedule has no phases".into()));
        }
        for (i, p) in phases.iter().enumerate() {
            if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
                return Err(Error::Schedule(format!("phase {i}: learning rate must be positive")));
            }
            if p.batch_size == 0 || p.ncore == 0 {
                return Err(Error::Schedule(format!("phase {i}: batch size and ncore must be at least 1")));
            }
        }
        Ok(Schedule { phases })
    }

    /// 200 epochs at learning rate 0.02, batch size 8, 16, 32, 64 for 50 epochs each.
    pub fn standard(ncore: usize) -> Self {
        let phases =
            [8, 16, 32, 64].map(|batch_size| Phase { nepoch: 50, learning_rate: 0.02, batch_size, ncore }).to_vec();
        Schedule::new(phases).expect("static schedule is valid")
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.nepoch).sum()
    }

    /// Parses one phase per line: `nepoch=<n> lr=<r> batch=<b> [ncore=<c>]`.
    ///
    /// `#` starts a comment. A missing `ncore` falls back to `default_ncore`.
    pub fn parse(text: &str, default_ncore: usize) -> Result<Self> {
        let mut phases = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Schedule(format!("line {}: {msg}", lineno + 1));
            let (mut nepoch, mut lr, mut batch, mut ncore) = (None, None, None, None);
            for field in line.split_whitespace() {
                let (key, value) =
                    field.split_once('=').ok_or_else(|| err(format!("expected key=value, got {field:?}")))?;
                let bad = |_| err(format!("invalid value for {key}: {value:?}"));
                match key {
                    "nepoch" => nepoch = Some(value.parse::<usize>().map_err(bad)?),
                    "lr" => lr = Some(value.parse::<f64>().map_err(|_| err(format!("invalid lr {value:?}")))?),
                    "batch" => batch = Some(value.parse::<usize>().map_err(bad)?),
                    "ncore" => ncore = Some(value.parse::<usize>().map_err(bad)?),
                    _ => return Err(err(format!("unknown key {key:?}"))),
                }
            }
            phases.push(Phase {
                nepoch: nepoch.ok_or_else(|| err("missing nepoch".into()))?,
                learning_rate: lr.ok_or_else(|| err("missing lr".into()))?,
                batch_size: batch.ok_or_else(|| err("missing batch".into()))?,
                ncore: ncore.unwrap_or(default_ncore),
            });
        }
        Schedule::new(phases)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.phases {
            writeln!(f, "nepoch={} lr={} batch={} ncore={}", p.nepoch, p.learning_rate, p.batch_size, p.ncore)?;
        }
        Ok(())
    }
}

/// Round half up: 0.5 counts as 1.
pub fn round_half_up(x: f64) -> f64 {
    if x >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Rule deciding whether a prediction counts as accurate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    /// Every component rounds to the rounded target component.
    Rounded,
    /// Four outputs, each rounding to the corresponding bit of the value mod 16.
    Arith,
    /// One output rounding to the truth label.
    Prop,
}

impl Criterion {
    pub fn accepts(self, prediction: &[f64], target: &[f64]) -> bool {
        let expected_len = match self {
            Criterion::Rounded => target.len(),
            Criterion::Arith => 4,
            Criterion::Prop => 1,
        };
        prediction.len() == expected_len
            && target.len() == expected_len
            && prediction.iter().zip(target).all(|(&p, &t)| round_half_up(p) == round_half_up(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    /// Fraction in `[0, 1]`; an empty set counts as fully accurate.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.fraction()
    }
}

/// Whether every head of `ex` satisfies `criterion`.
pub fn is_accurate(tnn: &Tnn, ex: &Example, criterion: Criterion) -> Result<bool> {
    let outputs = tnn.infer_heads(&ex.term, ex.targets.keys().map(String::as_str))?;
    Ok(ex.targets.iter().all(|(h, target)| criterion.accepts(&outputs[h], target)))
}

pub fn evaluate_accuracy(tnn: &Tnn, examples: &[Example], criterion: Criterion) -> Result<Accuracy> {
    let mut correct = 0;
    for ex in examples {
        if is_accurate(tnn, ex, criterion)? {
            correct += 1;
        }
    }
    Ok(Accuracy { correct, total: examples.len() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index across the whole schedule.
    pub epoch: usize,
    pub phase: usize,
    /// Training objective averaged over the examples of the epoch.
    pub mean_loss: f64,
    pub batches: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Number of epochs completed when measured.
    pub epoch: usize,
    pub train: Accuracy,
    pub test: Accuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub objective: Objective,
    pub epochs: Vec<EpochRecord>,
    pub evaluations: Vec<Evaluation>,
}

impl TrainReport {
    pub fn final_evaluation(&self) -> Option<&Evaluation> {
        self.evaluations.last()
    }

    /// Plain-text report; the last two lines hold the final accuracies.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "objective {}", self.objective);
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "epoch {} phase {} loss {:.6} batches {} seconds {:.3}",
                e.epoch, e.phase, e.mean_loss, e.batches, e.seconds
            );
        }
        for ev in &self.evaluations {
            let _ = writeln!(
                s,
                "eval epoch {} train {:.2}% ({}/{}) test {:.2}% ({}/{})",
                ev.epoch,
                ev.train.percent(),
                ev.train.correct,
                ev.train.total,
                ev.test.percent(),
                ev.test.correct,
                ev.test.total
            );
        }
        if let Some(ev) = self.final_evaluation() {
            let _ = writeln!(s, "train accuracy {:.2}%", ev.train.percent());
            let _ = writeln!(s, "test accuracy {:.2}%", ev.test.percent());
        }
        s
    }
}

/// Options beyond the schedule.
#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub seed: u64,
    pub criterion: Criterion,
    pub objective: Objective,
}

impl TrainOptions {
    pub fn new(seed: u64, criterion: Criterion) -> Self {
        TrainOptions { seed, criterion, objective: Objective::default() }
    }
}

/// Trains with the [`Criterion::Rounded`] evaluation rule.
pub fn train_tnn(
    schedule: &Schedule,
    initial: &Tnn,
    train: &[Example],
    test: &[Example],
    seed: u64,
) -> Result<(Tnn, TrainReport)> {
    train_tnn_with(schedule, initial, train, test, TrainOptions::new(seed, Criterion::Rounded))
}

/// Runs every phase in order: each epoch shuffles the training set with a
/// stream derived from `(seed, epoch)`, then applies one averaged gradient
/// step per batch.
pub fn train_tnn_with(
    schedule: &Schedule,
    initial: &Tnn,
    train: &[Example],
    test: &[Example],
    opts: TrainOptions,
) -> Result<(Tnn, TrainReport)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    for ex in train.iter().chain(test) {
        initial.check_example(ex).map_err(|e| {
            Error::InvalidArgument(format!("example {} is incompatible with the network: {e}", ex.term))
        })?;
    }

    let mut tnn = initial.clone();
    let mut report =
        TrainReport { seed: opts.seed, objective: opts.objective, epochs: Vec::new(), evaluations: Vec::new() };
    let evaluate = |tnn: &Tnn, epoch: usize| -> Result<Evaluation> {
        Ok(Evaluation {
            epoch,
            train: evaluate_accuracy(tnn, train, opts.criterion)?,
            test: evaluate_accuracy(tnn, test, opts.criterion)?,
        })
    };
    report.evaluations.push(evaluate(&tnn, 0)?);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0;
    for (pi, phase) in schedule.phases().iter().enumerate() {
        for _ in 0..phase.nepoch {
            let start = Instant::now();
            order.sort_unstable();
            order.shuffle(&mut epoch_rng(opts.seed, epoch));
            epoch += 1;

            let mut loss_sum = 0.0;
            let mut batches = 0;
            for batch in order.chunks(phase.batch_size) {
                let (store, batch_loss) = batch_gradient(&tnn, train, batch, phase.ncore, opts.objective)?;
                if !batch_loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {batch_loss} in epoch {epoch}")));
                }
                loss_sum += batch_loss;
                tnn.apply_update(&store, phase.learning_rate)?;
                batches += 1;
            }
            let record = EpochRecord {
                epoch,
                phase: pi,
                mean_loss: loss_sum / train.len() as f64,
                batches,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!("epoch {} phase {} loss {:.6} ({:.2}s)", record.epoch, pi, record.mean_loss, record.seconds);
            report.epochs.push(record);
        }
        if phase.nepoch > 0 {
            let ev = evaluate(&tnn, epoch)?;
            log::info!("after epoch {epoch}: train {:.2}% test {:.2}%", ev.train.percent(), ev.test.percent());
            report.evaluations.push(ev);
        }
    }
    Ok((tnn, report))
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Summed gradients and loss over `batch`.
///
/// Examples are split into `ncore` contiguous slices computed in parallel;
/// per-example stores are merged in batch order, so the result does not
/// depend on `ncore`.
pub fn batch_gradient(
    tnn: &Tnn,
    examples: &[Example],
    batch: &[usize],
    ncore: usize,
    objective: Objective,
) -> Result<(GradientStore, f64)> {
    let ncore = ncore.clamp(1, batch.len().max(1));
    let per_example: Vec<(GradientStore, f64)> = if ncore == 1 {
        batch.iter().map(|&i| tnn.backprop_example_with(&examples[i], objective)).collect::<Result<_>>()?
    } else {
        let chunk = batch.len().div_ceil(ncore);
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(chunk)
                .map(|slice| {
                    scope.spawn(move || {
                        slice
                            .iter()
                            .map(|&i| tnn.backprop_example_with(&examples[i], objective))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(batch.len());
            for h in handles {
                all.extend(h.join().expect("gradient worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let mut store = GradientStore::new();
    let mut loss = 0.0;
    for (g, l) in &per_example {
        store.merge(g);
        loss += l;
    }
    Ok((store, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;
    use crate::tnn::{random_tnn, signatures_for};
    use std::collections::BTreeMap;

    fn tiny_setup(dim: usize) -> (Tnn, Vec<Example>) {
        let arities = BTreeMap::from([("0".to_string(), 0), ("s".to_string(), 1), ("+".to_string(), 2)]);
        let tnn = random_tnn(&signatures_for(&arities, 2, &[dim]), dim, 3).unwrap();
        let data = [
            ("0", [0.0, 0.0]),
            ("(s 0)", [0.0, 1.0]),
            ("(s (s 0))", [1.0, 0.0]),
            ("(+ (s 0) (s 0))", [1.0, 0.0]),
            ("(+ 0 (s 0))", [0.0, 1.0]),
        ];
        let examples = data.iter().map(|(t, y)| Example::new(parse_term(t).unwrap(), y.to_vec())).collect();
        (tnn, examples)
    }

    #[test]
    fn schedule_text_format() {
        let text = "# standard schedule\nnepoch=50 lr=0.02 batch=8 ncore=1\n\nnepoch=50 lr=0.02 batch=16 # doubled\n";
        let s = Schedule::parse(text, 3).unwrap();
        assert_eq!(s.phases().len(), 2);
        assert_eq!(s.phases()[0], Phase { nepoch: 50, learning_rate: 0.02, batch_size: 8, ncore: 1 });
        assert_eq!(s.phases()[1].ncore, 3);
        assert_eq!(Schedule::parse(&s.to_string(), 1).unwrap(), s);

        assert!(Schedule::parse("", 1).is_err());
        assert!(Schedule::parse("# nothing\n", 1).is_err());
        assert!(Schedule::parse("nepoch=1 lr=0.1", 1).is_err());
        assert!(Schedule::parse("nepoch=1 lr=0.1 batch=0", 1).is_err());
        assert!(Schedule::parse("nepoch=1 lr=-1 batch=2", 1).is_err());
        assert!(Schedule::parse("nepoch=1 lr=0.1 batch=2 momentum=0.9", 1).is_err());
        assert!(Schedule::parse("nepoch=x lr=0.1 batch=2", 1).is_err());
    }

    #[test]
    fn standard_schedule() {
        let s = Schedule::standard(1);
        let batches: Vec<usize> = s.phases().iter().map(|p| p.batch_size).collect();
        assert_eq!(batches, vec![8, 16, 32, 64]);
        assert_eq!(s.total_epochs(), 200);
        assert!(s.phases().iter().all(|p| p.learning_rate == 0.02 && p.nepoch == 50));
    }

    #[test]
    fn rounding_criteria() {
        assert!(Criterion::Arith.accepts(&[0.9, 0.2, 0.6, 0.4], &[1.0, 0.0, 1.0, 0.0]));
        assert!(Criterion::Arith.accepts(&[0.5, 0.2, 0.6, 0.4], &[1.0, 0.0, 1.0, 0.0]));
        assert!(!Criterion::Arith.accepts(&[0.49, 0.2, 0.6, 0.4], &[1.0, 0.0, 1.0, 0.0]));
        assert!(!Criterion::Arith.accepts(&[0.9], &[1.0]));
        assert!(Criterion::Prop.accepts(&[0.7], &[1.0]));
        assert!(!Criterion::Prop.accepts(&[0.2], &[1.0]));
        assert_eq!(round_half_up(0.5), 1.0);
        assert_eq!(Accuracy { correct: 0, total: 0 }.fraction(), 1.0);
    }

    #[test]
    fn empty_and_zero_epoch_schedules() {
        let (tnn, data) = tiny_setup(3);
        assert!(Schedule::new(vec![]).is_err());
        let zero = Schedule::new(vec![Phase { nepoch: 0, learning_rate: 0.1, batch_size: 2, ncore: 1 }]).unwrap();
        let (out, report) = train_tnn(&zero, &tnn, &data, &[], 0).unwrap();
        assert_eq!(out, tnn);
        assert!(report.epochs.is_empty());
        assert!(train_tnn(&zero, &tnn, &[], &[], 0).is_err());
    }

    #[test]
    fn incompatible_examples_rejected_before_training() {
        let (tnn, mut data) = tiny_setup(3);
        data.push(Example::new(parse_term("(* 0 0)").unwrap(), vec![0.0, 0.0]));
        let s = Schedule::standard(1);
        assert!(matches!(train_tnn(&s, &tnn, &data, &[], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn batch_count_is_ceiling() {
        let (tnn, data) = tiny_setup(3);
        let s = Schedule::new(vec![Phase { nepoch: 2, learning_rate: 0.05, batch_size: 2, ncore: 1 }]).unwrap();
        let (_, report) = train_tnn(&s, &tnn, &data, &data, 4).unwrap();
        assert!(report.epochs.iter().all(|e| e.batches == 3));
        assert_eq!(report.epochs.len(), 2);
        assert_eq!(report.evaluations.len(), 2);
        assert!(report.to_text().ends_with(&format!("test accuracy {:.2}%\n", report.evaluations[1].test.percent())));
    }

    #[test]
    fn deterministic_and_core_count_independent() {
        let (tnn, data) = tiny_setup(4);
        let mk = |ncore| {
            Schedule::new(vec![
                Phase { nepoch: 3, learning_rate: 0.1, batch_size: 2, ncore },
                Phase { nepoch: 2, learning_rate: 0.05, batch_size: 4, ncore },
            ])
            .unwrap()
        };
        let (a, ra) = train_tnn(&mk(1), &tnn, &data, &[], 17).unwrap();
        let (b, rb) = train_tnn(&mk(1), &tnn, &data, &[], 17).unwrap();
        let (c, rc) = train_tnn(&mk(3), &tnn, &data, &[], 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let losses = |r: &TrainReport| r.epochs.iter().map(|e| e.mean_loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(losses(&ra), losses(&rb));
        assert_eq!(losses(&ra), losses(&rc));
        let (d, _) = train_tnn(&mk(1), &tnn, &data, &[], 18).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn memorizes_single_example() {
        let (_, data) = tiny_setup(4);
        let arities = BTreeMap::from([("0".to_string(), 0), ("s".to_string(), 1), ("+".to_string(), 2)]);
        let tnn = random_tnn(&signatures_for(&arities, 2, &[4]), 4, 1).unwrap();
        let one = &data[3..4];
        let s = Schedule::new(vec![Phase { nepoch: 500, learning_rate: 0.02, batch_size: 1, ncore: 1 }]).unwrap();
        let (trained, _) = train_tnn(&s, &tnn, one, &[], 0).unwrap();
        let out = trained.infer(&one[0].term, "head").unwrap();
        let last = crate::tnn::loss(&out, one[0].target().unwrap()).unwrap();
        assert!(last < 0.01, "final loss {last}");
    }
}
