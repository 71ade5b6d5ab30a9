use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use xfbq_core::{generate_synthetic, write_fvecs, write_ivecs, Distribution, FloatMatrix, IntMatrix};

fn xfbq() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xfbq"));
    for (k, _) in std::env::vars() {
        if k.starts_with("XFBQ_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn xfbq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
    docs: FloatMatrix,
}

impl Fixture {
    fn new(n: usize, dim: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let docs = generate_synthetic(n, dim, 21, Distribution::GaussianNormalized)
            .unwrap()
            .data;
        write_fvecs(&docs, dir.path().join("docs.fvecs")).unwrap();
        // The first 5 queries are copies of documents 0..5.
        let mut q = docs.head(5).into_vec();
        q.extend(
            generate_synthetic(5, dim, 22, Distribution::GaussianNormalized)
                .unwrap()
                .data
                .into_vec(),
        );
        write_fvecs(
            &FloatMatrix::new(q, 10, dim).unwrap(),
            dir.path().join("queries.fvecs"),
        )
        .unwrap();
        Fixture { dir, docs }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn build(&self, extra: &[&str]) -> Output {
        let o = run(xfbq()
            .arg("build")
            .arg("--input")
            .arg(self.path("docs.fvecs"))
            .arg("--output")
            .arg(self.path("index.xfbq"))
            .args(extra));
        assert!(o.status.success(), "build failed: {}", stderr(&o));
        o
    }
}

fn kv<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn build_then_search_writes_ranked_csv() {
    let fx = Fixture::new(2000, 64);
    let o = fx.build(&[]);
    let out = stdout(&o);
    assert_eq!(kv(&out, "n"), "2000");
    assert_eq!(kv(&out, "dim"), "64");
    assert_eq!(kv(&out, "doc_bits"), "3");
    assert_eq!(kv(&out, "query_bits"), "4");
    let written: u64 = kv(&out, "bytes_written").parse().unwrap();
    assert_eq!(written, std::fs::metadata(fx.path("index.xfbq")).unwrap().len());

    let o = run(xfbq()
        .arg("search")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args(["--k", "7", "--output"])
        .arg(fx.path("hits.csv")));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(fx.path("hits.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema: xfbq-search/1"));
    assert_eq!(lines.next(), Some("query_id,rank,doc_id,similarity"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 70);
    for q in 0..10 {
        let hits: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == q.to_string()).collect();
        assert_eq!(hits.len(), 7);
        let sims: Vec<f64> = hits.iter().map(|r| r[3].parse().unwrap()).collect();
        assert!(sims.windows(2).all(|w| w[0] >= w[1]));
        for (rank, r) in hits.iter().enumerate() {
            assert_eq!(r[1], rank.to_string());
        }
        if q < 5 {
            assert_eq!(hits[0][2], q.to_string(), "self query {q}");
            assert!((sims[0] - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn search_to_stdout_has_header_even_with_k_above_n() {
    let fx = Fixture::new(5, 16);
    fx.build(&[]);
    let o = run(xfbq()
        .arg("search")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args(["--k", "10", "--extra-distance", "0"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("# schema: xfbq-search/1\nquery_id,rank,doc_id,similarity\n"));
    assert_eq!(out.lines().count(), 2 + 10 * 5);
}

#[test]
fn flags_override_env_which_overrides_defaults() {
    let fx = Fixture::new(500, 32);
    let o = fx.build(&[]);
    assert_eq!(kv(&stdout(&o), "doc_bits"), "3");

    let o = run(xfbq()
        .env("XFBQ_DOC_BITS", "2")
        .env("XFBQ_SCALE", "3.5")
        .arg("build")
        .arg("--input")
        .arg(fx.path("docs.fvecs"))
        .arg("--output")
        .arg(fx.path("env.xfbq")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(kv(&stdout(&o), "doc_bits"), "2");
    assert_eq!(kv(&stdout(&o), "scale"), "3.500000");

    let o = run(xfbq()
        .env("XFBQ_DOC_BITS", "2")
        .arg("build")
        .arg("--input")
        .arg(fx.path("docs.fvecs"))
        .arg("--output")
        .arg(fx.path("flag.xfbq"))
        .args(["--doc-bits", "5"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(kv(&stdout(&o), "doc_bits"), "5");
}

#[test]
fn missing_input_fails_without_leaving_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(xfbq()
        .arg("build")
        .arg("--input")
        .arg(dir.path().join("absent.fvecs"))
        .arg("--output")
        .arg(dir.path().join("index.xfbq")));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("absent.fvecs"));
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn unwritable_output_leaves_no_partial_file() {
    let fx = Fixture::new(100, 8);
    let o = run(xfbq()
        .arg("build")
        .arg("--input")
        .arg(fx.path("docs.fvecs"))
        .arg("--output")
        .arg(fx.path("no_such_dir/index.xfbq")));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(files_in(fx.dir.path()), ["docs.fvecs", "queries.fvecs"]);
}

#[test]
fn invalid_width_is_rejected() {
    let fx = Fixture::new(100, 8);
    let o = run(xfbq()
        .arg("build")
        .arg("--input")
        .arg(fx.path("docs.fvecs"))
        .arg("--output")
        .arg(fx.path("index.xfbq"))
        .args(["--doc-bits", "9"]));
    assert_eq!(o.status.code(), Some(7));
    assert!(!fx.path("index.xfbq").exists());
}

#[test]
fn corrupt_index_and_unknown_version_have_distinct_codes() {
    let fx = Fixture::new(100, 8);
    fx.build(&[]);
    let good = std::fs::read(fx.path("index.xfbq")).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'Y';
    std::fs::write(fx.path("magic.xfbq"), bad_magic).unwrap();
    let mut bad_version = good.clone();
    bad_version[4..8].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(fx.path("version.xfbq"), bad_version).unwrap();
    std::fs::write(fx.path("short.xfbq"), &good[..good.len() - 3]).unwrap();

    for (file, code) in [("magic.xfbq", 4), ("version.xfbq", 5), ("short.xfbq", 4)] {
        let o = run(xfbq()
            .arg("search")
            .arg("--index")
            .arg(fx.path(file))
            .arg("--queries")
            .arg(fx.path("queries.fvecs")));
        assert_eq!(o.status.code(), Some(code), "{file}: {}", stderr(&o));
    }
}

#[test]
fn query_dimension_mismatch() {
    let fx = Fixture::new(100, 8);
    fx.build(&[]);
    let q = generate_synthetic(2, 9, 1, Distribution::GaussianNormalized)
        .unwrap()
        .data;
    write_fvecs(&q, fx.path("q9.fvecs")).unwrap();
    let o = run(xfbq()
        .arg("search")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("q9.fvecs")));
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn bench_with_oracle_reports_monotone_precision() {
    let fx = Fixture::new(3000, 64);
    fx.build(&[]);
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args([
            "--oracle",
            "--k",
            "10,1",
            "--extra-fractions",
            "0.1,0,0.02",
            "--threads",
            "2",
            "--output",
        ])
        .arg(fx.path("bench.csv")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(kv(&stdout(&o), "precision_monotone"), "true");
    let csv = std::fs::read_to_string(fx.path("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema: xfbq-bench/1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let extras: Vec<u64> = rows
        .iter()
        .map(|r| r[col("extra_distance")].parse().unwrap())
        .collect();
    assert!(extras.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(extras[0], 0);
    for r in &rows {
        let p: f64 = r[col("precision")].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(r[col("threads")], "2");
        assert!(!r[col("qps_multi")].is_empty());
        assert!(!r[col("float_qps")].is_empty());
        if r[col("extra_distance")] != "0" {
            assert_eq!(p, 1.0, "{r:?}");
        }
    }
}

#[test]
fn bench_with_ground_truth_file() {
    let fx = Fixture::new(400, 16);
    fx.build(&[]);
    let queries = xfbq_core::read_fvecs(fx.path("queries.fvecs")).unwrap().data;
    let mut ids = Vec::new();
    for q in queries.iter_rows() {
        ids.extend(
            xfbq_core::brute_force_topk(&fx.docs, q, 5)
                .unwrap()
                .iter()
                .map(|h| h.id as i32),
        );
    }
    write_ivecs(&IntMatrix::new(ids.clone(), 10, 5).unwrap(), fx.path("gt.ivecs")).unwrap();
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .arg("--ground-truth")
        .arg(fx.path("gt.ivecs"))
        .args(["--k", "5", "--extra-distances", "0,100000"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let last = stdout(&o)
        .lines()
        .filter(|l| l.trim_start().starts_with("100000"))
        .count();
    assert_eq!(last, 1);

    // k above the ground-truth width.
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .arg("--ground-truth")
        .arg(fx.path("gt.ivecs"))
        .args(["--k", "6"]));
    assert_eq!(o.status.code(), Some(7));
    assert!(stderr(&o).contains("ground truth"));

    // Row count differs from the query count.
    write_ivecs(
        &IntMatrix::new(ids[..45].to_vec(), 9, 5).unwrap(),
        fx.path("gt9.ivecs"),
    )
    .unwrap();
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .arg("--ground-truth")
        .arg(fx.path("gt9.ivecs"))
        .args(["--k", "5"]));
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn bench_requires_queries_and_truth_source() {
    let fx = Fixture::new(100, 8);
    fx.build(&[]);
    std::fs::write(fx.path("empty.fvecs"), b"").unwrap();
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("empty.fvecs"))
        .arg("--oracle"));
    assert_eq!(o.status.code(), Some(7));
    assert!(stderr(&o).contains("no queries"));

    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs")));
    assert_eq!(o.status.code(), Some(2), "clap usage error");
}

#[test]
fn dropped_originals_give_approximate_search_and_no_oracle() {
    let fx = Fixture::new(300, 16);
    fx.build(&["--drop-originals"]);
    let o = run(xfbq()
        .arg("search")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args(["--k", "3"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("quantized estimates"));
    assert_eq!(stdout(&o).lines().count(), 2 + 30);

    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .arg("--oracle"));
    assert_eq!(o.status.code(), Some(7));
}

#[test]
fn error_report_clamps_oversized_sample() {
    let fx = Fixture::new(200, 32);
    let o = run(xfbq()
        .arg("error-report")
        .arg("--input")
        .arg(fx.path("docs.fvecs"))
        .args(["--sample", "5000"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: sample 5000"));
    let out = stdout(&o);
    assert_eq!(kv(&out, "rows"), "200");
    let angle: f64 = kv(&out, "p95_angle_error_deg").parse().unwrap();
    assert!(angle > 0.0 && angle < 45.0);
    kv(&out, "mean_length_expansion").parse::<f64>().unwrap();
}

#[test]
fn non_unit_rows_warn_unless_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let docs = FloatMatrix::new(vec![3.0, 4.0, 1.0, 0.0, 0.0, 2.0], 3, 2).unwrap();
    write_fvecs(&docs, dir.path().join("d.fvecs")).unwrap();
    let build = |extra: &[&str]| {
        run(xfbq()
            .arg("build")
            .arg("--input")
            .arg(dir.path().join("d.fvecs"))
            .arg("--output")
            .arg(dir.path().join("i.xfbq"))
            .args(extra))
    };
    let o = build(&[]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("2 rows are not unit norm"));
    let o = build(&["--normalize"]);
    assert!(o.status.success());
    assert!(!stderr(&o).contains("unit norm"));
}

#[test]
fn kernel_bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(xfbq()
        .arg("kernel-bench")
        .args(["--n", "2000", "--dim", "128", "--repetitions", "1", "--output"])
        .arg(dir.path().join("k.csv")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(kv(&stdout(&o), "memory_ratio"), "0.10938");
    let csv = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("# schema: xfbq-kernel/1\nvariant,"));
}

fn search_csv(fx: &Fixture, index: &str, args: &[&str]) -> String {
    let o = run(xfbq()
        .arg("search")
        .arg("--index")
        .arg(fx.path(index))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args(args));
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
}

fn doc_ids(csv: &str, k: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let q: usize = f[0].parse().unwrap();
        if out.len() <= q {
            out.resize(q + 1, Vec::new());
        }
        out[q].push(f[2].parse().unwrap());
    }
    assert!(out.iter().all(|r| r.len() == k));
    out
}

#[test]
fn build_reports_packed_size_and_honours_fixed_scale() {
    let fx = Fixture::new(10_000, 128);
    let out = stdout(&fx.build(&["--scale", "2.95"]));
    assert_eq!(kv(&out, "packed_bytes"), (10_000 * 3 * 2 * 8).to_string());
    assert_eq!(kv(&out, "scale"), "2.950000");
}

#[test]
fn exhaustive_fraction_matches_oracle_and_is_deterministic() {
    let fx = Fixture::new(3000, 32);
    fx.build(&[]);
    let queries = xfbq_core::read_fvecs(fx.path("queries.fvecs")).unwrap().data;
    let csv = search_csv(&fx, "index.xfbq", &["--k", "10", "--extra-fraction", "1.0"]);
    for (q, row) in queries.iter_rows().zip(csv.lines().skip(2).collect::<Vec<_>>().chunks(10)) {
        let exact = xfbq_core::brute_force_topk(&fx.docs, q, 10).unwrap();
        for (h, line) in exact.iter().zip(row) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2], h.id.to_string());
            assert_eq!(f[3], format!("{:.9}", h.similarity));
        }
    }
    assert_eq!(csv, search_csv(&fx, "index.xfbq", &["--k", "10", "--extra-fraction", "1.0"]));
}

#[test]
fn precision_is_non_decreasing_from_extra_0_to_20() {
    let fx = Fixture::new(3000, 32);
    fx.build(&[]);
    let queries = xfbq_core::read_fvecs(fx.path("queries.fvecs")).unwrap().data;
    let exact: Vec<Vec<usize>> = queries
        .iter_rows()
        .map(|q| xfbq_core::brute_force_topk(&fx.docs, q, 10).unwrap().iter().map(|h| h.id).collect())
        .collect();
    let precision = |extra: &str| {
        let got = doc_ids(&search_csv(&fx, "index.xfbq", &["--k", "10", "--extra-distance", extra]), 10);
        xfbq_core::PrecisionReport::from_lists(&got, &exact, 10).unwrap().precision
    };
    let (p0, p20) = (precision("0"), precision("20"));
    assert!(p20 >= p0, "p@10 {p0} -> {p20}");
}

#[test]
fn error_report_on_dyadic_input_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let values = [0.125f32, -0.375, 0.625, -0.875, 0.375, 0.125, -0.625, 0.875];
    write_fvecs(&FloatMatrix::new(values.to_vec(), 2, 4).unwrap(), dir.path().join("d.fvecs")).unwrap();
    let o = run(xfbq()
        .arg("error-report")
        .arg("--input")
        .arg(dir.path().join("d.fvecs"))
        .args(["--doc-bits", "3", "--scale", "1", "--sample", "2"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(kv(&out, "mean_length_expansion"), "0.000000");
    assert_eq!(kv(&out, "mean_angle_error_deg"), "0.0000");
    assert_eq!(kv(&out, "p95_angle_error_deg"), "0.0000");
}

#[test]
fn bench_accepts_extra_alias_and_default_k_list() {
    let fx = Fixture::new(1500, 16);
    fx.build(&[]);
    let o = run(xfbq()
        .arg("bench")
        .arg("--index")
        .arg(fx.path("index.xfbq"))
        .arg("--queries")
        .arg(fx.path("queries.fvecs"))
        .args(["--oracle", "--extra", "0,20", "--output"])
        .arg(fx.path("b.csv")));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(fx.path("b.csv")).unwrap();
    let ks: Vec<&str> = csv.lines().skip(2).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ks, ["1", "10", "100", "1000", "1", "10", "100", "1000"]);
}
