//! Acceptance gate. Each criterion prints one PASS or FAIL line with its
//! measurement and elapsed time; the process exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::oracle;
use sheetfrag::analysis::Analysis;
use sheetfrag::corpus::{fixture, generate_corpus, CorpusSpec, FaultKind};
use sheetfrag::diagnosis::{
    covered_cells, diagnose, minimal_hitting_sets, Conflict, Label, LabelRecord, LabeledResult,
};
use sheetfrag::equivalence::{compute_classes, detect_blocks};
use sheetfrag::eval::evaluate;
use sheetfrag::formula::{
    parse_formula, print_formula, BinaryOp, CellRef, Expr, Function, RangeRef, UnaryOp,
};
use sheetfrag::fragment::{
    check_invariants, enumerate_fragments, extract_aggregation, extract_path_limited,
    extract_representative_row, Fragment, FragmentConfig, RepresentativeChoice, Strategy, Targets,
};
use sheetfrag::harness::{
    boundary_cases, capture_expected, falsify_property, run_tests, FalsifyOutcome, FragmentRunner,
    InputSpec, PropertySpec, TestCase,
};
use sheetfrag::rng::SplitMix64;
use sheetfrag::session::{Generation, Session};
use sheetfrag::value::values_match;
use sheetfrag::workbook::Formula;
use sheetfrag::{parse_address, CellAddress, CellContent, Value, Workbook};

type Outcome = Result<String, String>;

fn a(s: &str) -> CellAddress {
    parse_address(s).unwrap()
}

fn list<'a>(cells: impl IntoIterator<Item = &'a CellAddress>) -> String {
    cells.into_iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn cells(list: &[&str]) -> BTreeSet<CellAddress> {
    list.iter().map(|s| a(s)).collect()
}

fn column(col: &str, r1: u32, r2: u32) -> BTreeSet<CellAddress> {
    (r1..=r2).map(|r| a(&format!("{col}{r}"))).collect()
}

fn corpus(rows: u32, seed: u64, fault: FaultKind) -> sheetfrag::corpus::Corpus {
    generate_corpus(&CorpusSpec {
        rows,
        seed,
        fault,
        random_inputs: true,
    })
}

// ---------------------------------------------------------------------------
// Parser round trip

fn random_expr(rng: &mut SplitMix64, depth: u32) -> Expr {
    let leaf = depth == 0 || rng.below(3) == 0;
    if leaf {
        return match rng.below(6) {
            0 => Expr::Number(rng.below(100_000) as f64 / 16.0),
            1 => Expr::Bool(rng.below(2) == 1),
            2 => Expr::Text(["", "a", "x y", "q\"q"][rng.below(4)].to_string()),
            3 => {
                let (c1, r1) = (rng.below(30) as u16 + 1, rng.below(500) as u32 + 1);
                let (c2, r2) = (rng.below(30) as u16 + 1, rng.below(500) as u32 + 1);
                Expr::Range(RangeRef::new(cell_ref(rng, c1, r1), cell_ref(rng, c2, r2)))
            }
            _ => {
                let (c, r) = (rng.below(702) as u16 + 1, rng.below(100_000) as u32 + 1);
                Expr::Ref(cell_ref(rng, c, r))
            }
        };
    }
    match rng.below(4) {
        0 => Expr::Unary(UnaryOp::Neg, Box::new(random_expr(rng, depth - 1))),
        1 => {
            let f = Function::ALL[rng.below(8)];
            let n = match f {
                Function::If => 3,
                Function::Round => 2,
                Function::Abs => 1,
                _ => rng.below(3) + 1,
            };
            Expr::Call(f, (0..n).map(|_| random_expr(rng, depth - 1)).collect())
        }
        _ => {
            use BinaryOp::*;
            let ops = [Add, Sub, Mul, Div, Pow, Eq, Ne, Lt, Le, Gt, Ge];
            let op = ops[rng.below(ops.len())];
            Expr::binary(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
        }
    }
}

fn cell_ref(rng: &mut SplitMix64, col: u16, row: u32) -> CellRef {
    CellRef {
        addr: CellAddress::new(col, row).unwrap(),
        col_absolute: rng.below(2) == 1,
        row_absolute: rng.below(2) == 1,
    }
}

fn parser_round_trip() -> Outcome {
    let mut texts: Vec<String> = fixture().formulas().map(|(_, f)| f.text().to_string()).collect();
    for (i, kind) in FaultKind::INJECTED.iter().enumerate() {
        let c = corpus(12, i as u64, *kind);
        texts.extend(c.ground_truth.map(|g| g.mutated));
    }
    texts.extend(
        [
            "=-2^2",
            "=2^3^2",
            "=(1-$B$15)*-G2",
            "=IF(A1>=0,\"yes\",\"no\")",
            "=ROUND(AVERAGE(A1:C3,7),2)",
            "=1<>2=TRUE",
            "=--A1",
            "=SUM($A$1:B$2)/COUNT(C:C)",
            "=a1+b2",
            "=  1 +  2 ",
        ]
        .iter()
        .filter(|t| parse_formula(t).is_ok())
        .map(|t| t.to_string()),
    );
    let mut rng = SplitMix64::new(0x5eed);
    while texts.len() < 400 {
        texts.push(print_formula(&random_expr(&mut rng, 4)));
    }
    let mut failures = Vec::new();
    for t in &texts {
        let ok = parse_formula(t).ok().and_then(|e1| {
            let printed = print_formula(&e1);
            let e2 = parse_formula(&printed).ok()?;
            (e1 == e2 && print_formula(&e2) == printed).then_some(())
        });
        if ok.is_none() {
            failures.push(t.clone());
        }
    }
    if failures.is_empty() {
        Ok(format!("{} formulas reach a fixpoint", texts.len()))
    } else {
        Err(format!("{} of {} failed, first: {}", failures.len(), texts.len(), failures[0]))
    }
}

// ---------------------------------------------------------------------------
// Evaluator against the naive interpreter

fn evaluator_oracle() -> Outcome {
    let kinds = [
        FaultKind::None,
        FaultKind::OperatorSwap,
        FaultKind::RangeOffByOne,
        FaultKind::ReferenceShift,
        FaultKind::ConstantPerturb,
    ];
    let mut compared = 0usize;
    for seed in 0..100u64 {
        let rows = 2 + (seed * 7 % 39) as u32;
        let wb = corpus(rows, seed, kinds[seed as usize % kinds.len()]).workbook;
        let engine = evaluate(&wb, &BTreeMap::new());
        let naive = oracle::evaluate_all(&wb);
        for (addr, _) in wb.formulas() {
            let got = engine.get(addr);
            if got.is_error() {
                continue;
            }
            let want = &naive[&addr];
            let same = match (got, want) {
                (Value::Number(x), Value::Number(y)) => x.to_bits() == y.to_bits(),
                _ => got == want,
            };
            if !same {
                return Err(format!("seed {seed} {addr}: engine {got:?}, oracle {want:?}"));
            }
            compared += 1;
        }
    }
    Ok(format!("100 workbooks, {compared} non-error cells bit-identical"))
}

// ---------------------------------------------------------------------------
// Fixture values

fn fixture_values() -> Outcome {
    // Straight-line, in the formulas' operation order, for one data row.
    let (units, price, rate, tax, markup) = (100.0_f64, 10.0_f64, 0.1_f64, 0.2_f64, 1.05_f64);
    let gross = units * price;
    let net = (gross - gross * rate) * (1.0 - tax);
    let b17 = (0..12).fold(0.0, |acc, _| acc + net);
    let e17 = (b17 * markup - b17) / 12.0;
    let values = evaluate(&fixture(), &BTreeMap::new());
    let got = (values.get(a("E17")).clone(), values.get(a("B17")).clone());
    let want = (Value::Number(36.0), Value::Number(8640.0));
    if (e17, b17) != (36.0, 8640.0) {
        return Err(format!("straight-line oracle gives E17 = {e17}, B17 = {b17}"));
    }
    if got == want {
        Ok("E17 = 36, B17 = 8640".into())
    } else {
        Err(format!("E17 = {:?}, B17 = {:?}", got.0, got.1))
    }
}

// ---------------------------------------------------------------------------
// Copy-equivalence fill invariance

/// A random formula over columns A..C whose references stay in bounds when
/// filled down from `origin` by any number of rows up to 100.
fn fill_source(rng: &mut SplitMix64, depth: u32) -> Expr {
    if depth == 0 || rng.below(3) == 0 {
        return match rng.below(4) {
            0 => Expr::Number(rng.below(1000) as f64),
            1 => {
                let (c1, c2) = (rng.below(3) as u16 + 1, rng.below(3) as u16 + 1);
                let (r1, r2) = (rng.below(50) as u32 + 1, rng.below(50) as u32 + 1);
                Expr::Range(RangeRef::new(cell_ref(rng, c1, r1), cell_ref(rng, c2, r2)))
            }
            _ => {
                let (c, r) = (rng.below(3) as u16 + 1, rng.below(50) as u32 + 1);
                Expr::Ref(cell_ref(rng, c, r))
            }
        };
    }
    match rng.below(3) {
        0 => Expr::Call(Function::Sum, vec![fill_source(rng, depth - 1), fill_source(rng, depth - 1)]),
        1 => Expr::negate(fill_source(rng, depth - 1)),
        _ => {
            use BinaryOp::*;
            let ops = [Add, Sub, Mul, Div];
            let op = ops[rng.below(4)];
            Expr::binary(op, fill_source(rng, depth - 1), fill_source(rng, depth - 1))
        }
    }
}

fn fill_invariance() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    for experiment in 0..50 {
        let expr = fill_source(&mut rng, 3);
        let top = rng.below(50) as u32 + 1;
        let (c1, width) = (rng.below(5) as u16 + 5, rng.below(4) as u16 + 1);
        let height = rng.below(40) as u32 + 2;
        let mut wb = Workbook::new("fill");
        for dc in 0..width {
            for dr in 0..height {
                let moved = expr
                    .translate(i64::from(dc), i64::from(dr))
                    .ok_or_else(|| format!("experiment {experiment}: fill left the sheet"))?;
                let at = CellAddress::new(c1 + dc, top + dr).unwrap();
                wb.set(at, CellContent::Formula(Formula::from_expr(moved)));
            }
        }
        let classes = compute_classes(&wb);
        let blocks = detect_blocks(&classes);
        let size = (width as usize) * (height as usize);
        if classes.len() != 1 || classes[0].len() != size {
            return Err(format!("experiment {experiment}: {} classes for {}", classes.len(), print_formula(&expr)));
        }
        let want = ((top, top + height - 1), (c1, c1 + width - 1));
        if blocks.len() != 1 || (blocks[0].rows, blocks[0].cols) != want {
            return Err(format!("experiment {experiment}: blocks {blocks:?}"));
        }
    }
    Ok("50 of 50 fills give one class and one block".into())
}

// ---------------------------------------------------------------------------
// Strategies on the fixture

fn s1_structure() -> Outcome {
    let an = Analysis::of(fixture());
    let all = enumerate_fragments(&an, &Targets::Auto, &FragmentConfig::default());
    let s1: Vec<&Fragment> = all.iter().filter(|f| f.strategy == Strategy::S1).collect();
    if s1.len() != 1 {
        return Err(format!("{} S1 fragments", s1.len()));
    }
    let f = s1[0];
    let block = &an.blocks()[0];
    let row_cells: BTreeSet<u32> = f.cells.iter().map(|c| c.row()).collect();
    if f.cells != cells(&["E2", "F2", "G2", "H2"]) || row_cells.len() != 1 {
        return Err(format!("cells {}", list(&f.cells)));
    }
    if block.height() != 12 {
        return Err(format!("block height {}", block.height()));
    }
    Ok(format!("1 fragment with 4 cells in row 2 stands for {} rows", block.height()))
}

fn s2_with_k2() -> Outcome {
    let an = Analysis::of(fixture());
    let f = extract_aggregation(&an, a("B17"), 2).map_err(|e| e.to_string())?;
    let h_class = column("H", 2, 13);
    if f.border_inputs.len() != 2 || !f.border_inputs.is_subset(&h_class) {
        return Err(format!("border inputs {}", list(&f.border_inputs)));
    }
    let runner = FragmentRunner::new(an.workbook(), &f);
    let mut rng = SplitMix64::new(77);
    for _ in 0..200 {
        let x = rng.next_unit() * 2000.0 - 1000.0;
        let y = rng.next_unit() * 2000.0 - 1000.0;
        let mut inputs = BTreeMap::new();
        let mut it = f.border_inputs.iter();
        inputs.insert(*it.next().unwrap(), Value::Number(x));
        inputs.insert(*it.next().unwrap(), Value::Number(y));
        let got = runner.outputs(&inputs)[&a("B17")].clone();
        if got != Value::Number(x + y) {
            return Err(format!("B17 = {got:?} for {x} + {y}"));
        }
    }
    Ok(format!("inputs {}; rewrite equals x + y on 200 draws", list(&f.border_inputs)))
}

fn s3_fragment_b() -> Outcome {
    let an = Analysis::of(fixture());
    let f = extract_path_limited(&an, a("E17"), &FragmentConfig::default()).map_err(|e| e.to_string())?;
    let want = cells(&["B17", "C17", "D17", "E17"]);
    if f.cells != want {
        return Err(format!("cells {}", list(&f.cells)));
    }
    let h_class = column("H", 2, 13);
    if !h_class.is_subset(&f.border_inputs) {
        return Err(format!("border inputs {}", list(&f.border_inputs)));
    }
    let rest: BTreeSet<CellAddress> = f.border_inputs.difference(&h_class).copied().collect();
    Ok(format!("cells {{B17,C17,D17,E17}}, border H2:H13 plus {}", list(&rest)))
}

// ---------------------------------------------------------------------------
// Fragment closure

fn fragment_closure() -> Outcome {
    let mut checked = 0usize;
    for seed in 0..24u64 {
        let kind = [FaultKind::None, FaultKind::OperatorSwap, FaultKind::RangeOffByOne, FaultKind::ReferenceShift, FaultKind::ConstantPerturb][seed as usize % 5];
        let rows = 2 + (seed as u32 * 5) % 20;
        let an = Analysis::of(corpus(rows, seed, kind).workbook);
        let mut fragments: Vec<Fragment> = Vec::new();
        for block in an.blocks() {
            for choice in [RepresentativeChoice::First, RepresentativeChoice::Middle] {
                fragments.extend(extract_representative_row(&an, block, choice).ok());
            }
        }
        let formulas: Vec<CellAddress> = an.workbook().formulas().map(|(c, _)| c).collect();
        for &cell in &formulas {
            for k in 2..=4 {
                fragments.extend(extract_aggregation(&an, cell, k).ok());
            }
            for depth in 1..=4 {
                for class_stop in [2, 3, 100] {
                    let cfg = FragmentConfig {
                        depth_limit: depth,
                        class_stop_threshold: class_stop,
                        breadth_limit: 8,
                        ..FragmentConfig::default()
                    };
                    fragments.extend(extract_path_limited(&an, cell, &cfg).ok());
                }
            }
        }
        for f in &fragments {
            check_invariants(&an, f).map_err(|e| format!("seed {seed}: {e}"))?;
        }
        checked += fragments.len();
    }
    if checked < 1000 {
        return Err(format!("only {checked} fragments extracted"));
    }
    Ok(format!("{checked} fragments closed and acyclic"))
}

// ---------------------------------------------------------------------------
// Range smell

fn range_smell() -> Outcome {
    let mut flagged = 0;
    let total = 60u64;
    for seed in 0..total {
        let rows = 3 + (seed as u32 * 11) % 30;
        let c = corpus(rows, seed, FaultKind::RangeOffByOne);
        let truth = c.ground_truth.ok_or("no ground truth")?;
        let original = parse_formula(&truth.original).map_err(|e| e.to_string())?;
        let mutated = parse_formula(&truth.mutated).map_err(|e| e.to_string())?;
        let omitted: BTreeSet<CellAddress> = original
            .referenced_cells()
            .difference(&mutated.referenced_cells())
            .copied()
            .collect();
        let an = Analysis::of(c.workbook);
        let hit = an.smells().iter().any(|s| {
            s.aggregate == truth.cell && s.omitted == omitted
        });
        if !hit {
            return Err(format!("seed {seed} rows {rows}: {} omits {omitted:?}, smells {:?}", truth.mutated, an.smells()));
        }
        flagged += 1;
    }
    Ok(format!("{flagged} of {total} instances flagged with the exact omitted cell"))
}

// ---------------------------------------------------------------------------
// Diagnosis soundness

/// Subset-minimal hitting sets of size at most `kmax`, by enumerating every
/// subset of `universe`.
fn brute_force_hitting_sets(
    universe: &[CellAddress],
    conflicts: &[Conflict],
    kmax: usize,
) -> BTreeSet<BTreeSet<CellAddress>> {
    let n = universe.len();
    let hits = |mask: u32| {
        conflicts
            .iter()
            .all(|c| (0..n).any(|i| mask & (1 << i) != 0 && c.contains(&universe[i])))
    };
    let hitting: Vec<u32> = (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize <= kmax && hits(*m))
        .collect();
    hitting
        .iter()
        .filter(|&&m| !hitting.iter().any(|&o| o != m && o & m == o))
        .map(|&m| (0..n).filter(|i| m & (1 << i) != 0).map(|i| universe[i]).collect())
        .collect()
}

/// Labels a user with the fault-free sheet in mind would give: boundary
/// tests of every fragment replayed on the faulty sheet, plus a verdict on
/// every sink of the whole sheet.
fn user_labels(clean: &Analysis, faulty: &Analysis) -> Vec<LabeledResult> {
    let mut labels = Vec::new();
    let mut record = |output, label, covered| {
        let r = LabelRecord {
            test_id: None,
            output,
            label,
            expected: None,
        };
        labels.push(LabeledResult::new(&r, covered));
    };
    for f in enumerate_fragments(clean, &Targets::Auto, &FragmentConfig::default()) {
        let tests: Vec<TestCase> = boundary_cases(&f, &InputSpec::default())
            .unwrap()
            .into_iter()
            .map(|inputs| capture_expected(clean.workbook(), &f, inputs, None).unwrap())
            .collect();
        let report = run_tests(faulty.workbook(), &f, &tests).unwrap();
        for result in &report.results {
            for check in &result.outputs {
                let label = if check.matches { Label::Correct } else { Label::Faulty };
                record(check.output, label, covered_cells(faulty, Some(&f), check.output));
            }
        }
    }
    let want = evaluate(clean.workbook(), &BTreeMap::new());
    let got = evaluate(faulty.workbook(), &BTreeMap::new());
    for sink in clean.sinks() {
        let label = if values_match(got.get(sink), want.get(sink)) {
            Label::Correct
        } else {
            Label::Faulty
        };
        record(sink, label, covered_cells(faulty, None, sink));
    }
    labels
}

fn diagnosis_soundness() -> Outcome {
    let (mut observable, mut unobservable, mut brute) = (0, 0, 0);
    let mut seed = 0u64;
    while observable < 100 {
        if seed > 1000 {
            return Err(format!("only {observable} observable faults in {seed} seeds"));
        }
        let kind = FaultKind::INJECTED[seed as usize % 4];
        let rows = if seed.is_multiple_of(3) { 2 } else { 3 + (seed as u32 % 10) };
        let faulty = corpus(rows, seed, kind);
        let truth = faulty.ground_truth.clone().ok_or("fault not recorded")?.cell;
        let clean = Analysis::of(corpus(rows, seed, FaultKind::None).workbook);
        let faulty = Analysis::of(faulty.workbook);
        seed += 1;

        let labels = user_labels(&clean, &faulty);
        if labels.iter().all(|l| l.label == Label::Correct) {
            unobservable += 1;
            continue;
        }
        observable += 1;
        let report = diagnose(&labels, 2).map_err(|e| format!("seed {}: {e}", seed - 1))?;
        if !report.diagnoses.iter().any(|d| d.cells.contains(&truth)) {
            return Err(format!("seed {}: {truth} in no diagnosis of {:?}", seed - 1, report.diagnoses));
        }
        let universe: Vec<CellAddress> = faulty.workbook().formulas().map(|(c, _)| c).collect();
        if universe.len() <= 12 {
            for kmax in 1..=4 {
                let fast: BTreeSet<BTreeSet<CellAddress>> =
                    minimal_hitting_sets(&report.conflicts, kmax).into_iter().collect();
                let slow = brute_force_hitting_sets(&universe, &report.conflicts, kmax);
                if fast != slow {
                    return Err(format!("seed {}: kmax {kmax}: {fast:?} vs brute force {slow:?}", seed - 1));
                }
            }
            brute += 1;
        }
    }
    Ok(format!(
        "{observable} observable runs sound ({unobservable} unobservable skipped); {brute} instances match brute force"
    ))
}

// ---------------------------------------------------------------------------
// Falsification

fn falsification() -> Outcome {
    let an = Analysis::of(fixture());
    let f = extract_path_limited(&an, a("E17"), &FragmentConfig::default()).map_err(|e| e.to_string())?;
    let property = PropertySpec::parse("E17 >= 0").map_err(|e| e.to_string())?;
    let spec = InputSpec::uniform(-1000.0, 1000.0);
    match falsify_property(an.workbook(), &f, &property, &spec, 10_000, 1).map_err(|e| e.to_string())? {
        FalsifyOutcome::Counterexample(cx) => {
            // Replay the counterexample by hand: E17 = (B17·B16 − B17)/12.
            let b17: f64 = column("H", 2, 13)
                .iter()
                .map(|h| cx.inputs[h].as_number().unwrap())
                .fold(0.0, |acc, x| acc + x);
            let b16 = cx.inputs[&a("B16")].as_number().unwrap();
            let e17 = (b17 * b16 - b17) / 12.0;
            if e17 >= 0.0 {
                return Err(format!("counterexample does not violate: E17 = {e17}"));
            }
            Ok(format!("counterexample at trial {} (E17 = {e17:.3})", cx.trial + 1))
        }
        FalsifyOutcome::NoneFound { trials } => Err(format!("none found in {trials} trials")),
    }
}

// ---------------------------------------------------------------------------
// Capture and replay

fn capture_replay() -> Outcome {
    let kinds = [FaultKind::None, FaultKind::OperatorSwap, FaultKind::RangeOffByOne, FaultKind::ReferenceShift, FaultKind::ConstantPerturb];
    let mut replayed = 0usize;
    for seed in 0..20u64 {
        let an = Analysis::of(corpus(2 + seed as u32, seed, kinds[seed as usize % 5]).workbook);
        let cfg = FragmentConfig {
            min_complexity: 1,
            ..FragmentConfig::default()
        };
        for f in enumerate_fragments(&an, &Targets::Auto, &cfg) {
            let mut tests = Vec::new();
            for inputs in boundary_cases(&f, &InputSpec::default()).unwrap() {
                tests.push(capture_expected(an.workbook(), &f, inputs, None).unwrap());
            }
            for s in 0..5 {
                let inputs = sheetfrag::harness::generate_inputs(&f, &InputSpec::uniform(-50.0, 50.0), s).unwrap();
                tests.push(capture_expected(an.workbook(), &f, inputs, Some(s)).unwrap());
            }
            let report = run_tests(an.workbook(), &f, &tests).unwrap();
            if report.summary.pass != tests.len() {
                return Err(format!("seed {seed} {}: {:?}", f.id, report.summary));
            }
            replayed += tests.len();
        }
    }

    let (mut inside, mut caught) = (0, 0);
    for seed in 0..60u64 {
        let rows = 2 + (seed as u32 * 3) % 15;
        let faulty = corpus(rows, seed, FaultKind::OperatorSwap);
        let truth = faulty.ground_truth.clone().ok_or("fault not recorded")?.cell;
        let clean = Analysis::of(corpus(rows, seed, FaultKind::None).workbook);
        let mut tested = enumerate_fragments(&clean, &Targets::Auto, &FragmentConfig::default());
        tested.extend(extract_path_limited(&clean, truth, &FragmentConfig::default()).ok());
        let containing: Vec<&Fragment> = tested.iter().filter(|f| f.cells.contains(&truth)).collect();
        if containing.is_empty() {
            continue;
        }
        inside += 1;
        let detected = containing.iter().any(|f| {
            let tests: Vec<TestCase> = boundary_cases(f, &InputSpec::default())
                .unwrap()
                .into_iter()
                .map(|inputs| capture_expected(clean.workbook(), f, inputs, None).unwrap())
                .collect();
            let report = run_tests(&faulty.workbook, f, &tests).unwrap();
            report.summary.fail + report.summary.error > 0
        });
        if !detected {
            let g = faulty.ground_truth.unwrap();
            return Err(format!("seed {seed}: {} -> {} at {truth} not caught", g.original, g.mutated));
        }
        caught += 1;
    }
    Ok(format!("{replayed} captured tests pass on replay; {caught} of {inside} operator swaps caught"))
}

// ---------------------------------------------------------------------------
// Persistence

fn dir_files(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn persistence() -> Outcome {
    let mut s = Session::new(fixture());
    let b = "s3-E17-d3-b16-c3";
    s.generate_tests(b, Generation::Boundary, &InputSpec::default()).map_err(|e| e.to_string())?;
    s.generate_tests("s1-E2-H13-first", Generation::Random { seed: 3, count: 4 }, &InputSpec::uniform(-1.5, 2.25))
        .map_err(|e| e.to_string())?;
    s.generate_tests("s2-B17-k2", Generation::Random { seed: 11, count: 2 }, &InputSpec::default())
        .map_err(|e| e.to_string())?;
    s.add_label(LabelRecord { test_id: Some("t1".into()), output: a("E17"), label: Label::Faulty, expected: Some(Value::Number(0.1)) })
        .map_err(|e| e.to_string())?;
    s.add_label(LabelRecord { test_id: None, output: a("B17"), label: Label::Correct, expected: None })
        .map_err(|e| e.to_string())?;
    s.set_focus(Some(b)).map_err(|e| e.to_string())?;
    s.set_cell(a("H5"), Value::Number(1.0 / 3.0)).map_err(|e| e.to_string())?;

    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    s.save(first.path()).map_err(|e| e.to_string())?;
    Session::save_diagnosis(first.path(), &s.diagnose(2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;

    let reopened = Session::open(first.path()).map_err(|e| e.to_string())?;
    reopened.save(second.path()).map_err(|e| e.to_string())?;
    Session::save_diagnosis(second.path(), &reopened.diagnose(2).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;

    let (x, y) = (dir_files(first.path()), dir_files(second.path()));
    if x.len() != 7 {
        return Err(format!("expected 7 files, found {:?}", x.keys().collect::<Vec<_>>()));
    }
    if x != y {
        let differing: Vec<&String> = x.keys().filter(|k| x.get(*k) != y.get(*k)).collect();
        return Err(format!("files differ after round trip: {differing:?}"));
    }
    let same_state = reopened.committed() == s.committed()
        && reopened.working() == s.working()
        && reopened.tests() == s.tests()
        && reopened.labels() == s.labels()
        && reopened.focus() == s.focus()
        && reopened.version() == s.version();
    if !same_state {
        return Err("reopened session differs in memory".into());
    }
    Ok(format!("{} files byte-identical after save, load, save", x.len()))
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { name: "parser round-trip", limit: secs(5), run: parser_round_trip },
        Criterion { name: "evaluator oracle equivalence", limit: secs(30), run: evaluator_oracle },
        Criterion { name: "fixture ground values", limit: None, run: fixture_values },
        Criterion { name: "copy-equivalence fill invariance", limit: None, run: fill_invariance },
        Criterion { name: "S1 structure", limit: None, run: s1_structure },
        Criterion { name: "S2 with k=2", limit: None, run: s2_with_k2 },
        Criterion { name: "S3 reconstruction of fragment B", limit: None, run: s3_fragment_b },
        Criterion { name: "fragment closure", limit: None, run: fragment_closure },
        Criterion { name: "range smell", limit: None, run: range_smell },
        Criterion { name: "diagnosis soundness", limit: secs(60), run: diagnosis_soundness },
        Criterion { name: "falsification", limit: secs(5), run: falsification },
        Criterion { name: "capture-replay fixpoint", limit: None, run: capture_replay },
        Criterion { name: "persistence", limit: None, run: persistence },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {:.2}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {}: {detail} [{:.2}s]", c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
