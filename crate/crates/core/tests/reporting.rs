use std::path::PathBuf;

use kgadapt::adapt::Strategy;
use kgadapt::eval::{
    parse_table_tsv, render_comparison, render_table, Counts, Mode, ResultRow, ResultTable,
    RowSpec, TableFormat,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn reference() -> ResultTable {
    parse_table_tsv(&std::fs::read_to_string(fixture("table1_reference.tsv")).unwrap()).unwrap()
}

fn row(strategy: Strategy, mode: Mode, out_pie: u64, in_pie: u64, invalid: u64) -> ResultRow {
    let counts = Counts {
        out_pie,
        in_pie,
        invalid,
        failed: 0,
    };
    ResultRow {
        row: RowSpec::new(strategy, mode),
        proportions: counts.proportions().unwrap(),
        counts,
    }
}

/// A partial run: two adapted rows and the baseline, 200 outcomes each.
fn run() -> ResultTable {
    let mut t = ResultTable::default();
    t.insert(row(Strategy::None, Mode::Baseline, 50, 50, 100));
    t.insert(row(Strategy::Soft, Mode::Personalized, 70, 20, 110));
    t.insert(row(Strategy::Removal, Mode::Global, 66, 0, 134));
    t
}

/// Compares against a committed golden file; `KGADAPT_BLESS=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("KGADAPT_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, want, "{name} drifted");
}

#[test]
fn reference_fixture_holds_the_published_rows() {
    let t = reference();
    assert_eq!(t.rows.len(), 8);
    let get = |s, m| t.get(RowSpec::new(s, m)).unwrap().proportions;
    assert_eq!(
        get(Strategy::Soft, Mode::Personalized),
        [0.3237, 0.2158, 0.4604]
    );
    assert_eq!(
        get(Strategy::Removal, Mode::Global),
        [0.3277, 0.2203, 0.4520]
    );
    assert_eq!(
        get(Strategy::PromptOnly, Mode::Baseline),
        [0.1925, 0.1863, 0.6211]
    );
    assert_eq!(
        get(Strategy::None, Mode::Baseline),
        [0.2517, 0.2583, 0.4901]
    );
    for r in &t.rows {
        assert!(
            (r.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-3,
            "{r:?}"
        );
    }
    // rendering the parsed fixture reproduces it byte for byte
    assert_eq!(
        render_table(&t, TableFormat::Tsv),
        std::fs::read_to_string(fixture("table1_reference.tsv")).unwrap()
    );
}

#[test]
fn comparison_tables_are_byte_stable() {
    let tsv = render_comparison(&run(), &reference(), TableFormat::Tsv);
    let md = render_comparison(&run(), &reference(), TableFormat::Markdown);
    golden("comparison_golden.tsv", &tsv);
    golden("comparison_golden.md", &md);
    assert_eq!(
        tsv,
        render_comparison(&run(), &reference(), TableFormat::Tsv)
    );
}

#[test]
fn comparison_cells_are_run_minus_reference() {
    let tsv = render_comparison(&run(), &reference(), TableFormat::Tsv);
    let line = |label: &str| -> Vec<String> {
        tsv.lines()
            .find(|l| l.starts_with(&format!("{label}\t")))
            .unwrap()
            .split('\t')
            .map(str::to_string)
            .collect()
    };
    // 70/200 = 0.35; 0.35 - 0.3237 = 0.0263
    assert_eq!(
        line("Soft (personalized)"),
        [
            "Soft (personalized)",
            "0.3500",
            "0.1000",
            "0.5500",
            "0.3237",
            "0.2158",
            "0.4604",
            "+0.0263",
            "-0.1158",
            "+0.0896"
        ]
    );
    assert_eq!(line("Hard (global)")[1], "-");
    assert_eq!(line("Hard (global)")[4], "0.2768");
    assert_eq!(line("Hard (global)")[7], "-");
    assert_eq!(tsv.lines().count(), 9);
}
