use membrane_cli::config::{CommandName, Format};
use membrane_cli::emit::table_csv;
use membrane_cli::run::Envelope;
use membrane_cli::{emit, parse_config, run, ConfigError, RunConfig};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

fn config(body: &str) -> RunConfig {
    parse_config(body).unwrap()
}

fn interval(command: &str, refuges: bool) -> String {
    let refuge_block = if refuges {
        "[[refuges]]\nsubdomain = 1\nbox = [0.125, 0.375]\n\n[[refuges]]\nsubdomain = 2\nbox = [0.625, 0.875]\n"
    } else {
        ""
    };
    format!(
        "[geometry]\nkind = \"interval\"\ngamma = 0.5\n\n[coefficients]\nmu = 1.0\np = 2.0\n\n{refuge_block}\n[mesh]\nn_per_side = 128\n\n[command]\n{command}\n"
    )
}

fn run_ok(body: &str) -> Envelope {
    run(&config(body)).unwrap()
}

fn header(env: &Envelope, table: &str) -> String {
    let csv = table_csv(env.table(table).unwrap()).unwrap();
    String::from_utf8(csv).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn lambda_star_on_symmetric_interval_matches_pi_squared() {
    let mut cfg = config(&interval("name = \"lambda_star\"", false));
    cfg.mesh.n_per_side = 256;
    let env = run(&cfg).unwrap();
    assert!(env.succeeded());
    let ls = env.results["lambda_star"].as_f64().unwrap();
    let err = env.results["richardson_error"].as_f64().unwrap();
    assert!((ls - PI * PI).abs() < 1e-4, "{ls}");
    assert!(err <= 1e-4, "{err}");
    let rich = env.results["richardson"].as_f64().unwrap();
    assert!((rich - PI * PI).abs() < (ls - PI * PI).abs());
}

#[test]
fn branch_below_threshold_is_trivial() {
    let env = run_ok(&interval("name = \"branch\"\nlambda_grid = [2.0, 5.0, 8.0, 9.5]", false));
    assert!(env.succeeded(), "{:?}", env.failures);
    let sup = env.table("branch").unwrap().floats("sup_norm");
    assert_eq!(sup.len(), 4);
    assert!(sup.iter().all(|s| *s <= 1e-8), "{sup:?}");
}

#[test]
fn branch_header_and_monotone_rows() {
    let env = run_ok(&interval("name = \"branch\"\nlambda_grid = [12.0, 20.0, 40.0, 80.0]", true));
    assert!(env.succeeded(), "{:?}", env.failures);
    assert_eq!(header(&env, "branch"), "lambda,sup_norm,mass_norm,newton_iters,residual");
    let sup = env.table("branch").unwrap().floats("sup_norm");
    assert!(sup.windows(2).all(|w| w[1] > w[0]), "{sup:?}");
    assert_eq!(env.results["monotone"], true);
}

#[test]
fn alpha_sweep_header() {
    let env = run_ok(&interval("name = \"alpha_sweep\"\nalpha_list = [1.0, 10.0]", true));
    assert!(env.succeeded(), "{:?}", env.failures);
    assert_eq!(
        header(&env, "alpha_sweep"),
        "alpha,lambda_alpha,slack_hnorm,slack_interface,slack_potential,refuge_mass_fraction"
    );
}

#[test]
fn eigen_writes_one_row_per_node() {
    let env = run_ok(&interval("name = \"eigen\"", false));
    assert_eq!(header(&env, "eigenfunction"), "subdomain,x,value");
    assert_eq!(env.table("eigenfunction").unwrap().rows.len(), 2 * 129);

    let square = "[geometry]\nkind = \"rectangle\"\ny = [0.0, 1.0]\ngamma = 0.5\n\n[coefficients]\nmu = 1.0\np = 2.0\n\n[mesh]\nn_per_side = 8\n\n[command]\nname = \"eigen\"\n";
    let env = run_ok(square);
    assert_eq!(header(&env, "eigenfunction"), "subdomain,x,y,value");
    assert_eq!(env.table("eigenfunction").unwrap().rows.len(), 2 * 9 * 9);
}

#[test]
fn validate_passes_on_degenerate_spec() {
    let env = run_ok(&interval("name = \"validate\"", true));
    let table = env.table("validate").unwrap();
    assert_eq!(header(&env, "validate"), "invariant,module,n,passed,value,threshold");
    for n in ["128", "256"] {
        assert!(table.rows.iter().any(|r| r[2].to_string() == n));
    }
    assert!(env.succeeded(), "{:?}", env.failures);
}

#[test]
fn config_echo_round_trips() {
    let cfg = config(&interval("name = \"branch\"\nlambda_grid = [12.0, 20.0]", true));
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    let env = run(&cfg).unwrap();
    let echoed: RunConfig = serde_json::from_value(env.to_json()["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn envelope_has_documented_keys() {
    let env = run_ok(&interval("name = \"lambda_infinity\"", true));
    let json = env.to_json();
    let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["config", "hash", "mesh_convergence", "results", "timings"]);
    assert_eq!(env.hash.len(), 64);
    let mc = &json["mesh_convergence"];
    assert_eq!(mc["n_coarse"], 64);
    assert!(mc["lambda_star"]["richardson"].is_number());
    assert!(mc["lambda_infinity"]["fine"].is_number());
}

#[test]
fn hash_depends_only_on_config() {
    let a = config(&interval("name = \"lambda_star\"", false));
    let mut b = a.clone();
    assert_eq!(membrane_cli::run::config_hash(&a), membrane_cli::run::config_hash(&b));
    b.coefficients.mu = 2.0;
    assert_ne!(membrane_cli::run::config_hash(&a), membrane_cli::run::config_hash(&b));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn csv_payload_is_deterministic_and_overwritten() {
    let cfg = config(&interval("name = \"branch\"\nlambda_grid = [5.0, 12.0, 20.0, 40.0]", true));
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    emit(&run(&cfg).unwrap(), &a, true, true).unwrap();
    emit(&run(&cfg).unwrap(), &b, true, true).unwrap();
    assert_eq!(read_all(&a), read_all(&b));
    let first = read_all(&a);
    emit(&run(&cfg).unwrap(), &a, true, false).unwrap();
    assert_eq!(read_all(&a), first);
    let text = String::from_utf8(first[0].1.clone()).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn formats_select_outputs() {
    let mut cfg = config(&interval("name = \"eigen\"", false));
    cfg.output.formats = vec![Format::Json];
    let tmp = tempfile::tempdir().unwrap();
    let files = emit(&run(&cfg).unwrap(), tmp.path(), false, true).unwrap();
    assert_eq!(files, vec![tmp.path().join("envelope.json")]);
}

#[test]
fn missing_command_fields_are_invariant_errors() {
    for cmd in ["name = \"solve\"", "name = \"branch\"", "name = \"blowup\""] {
        let err = parse_config(&interval(cmd, false)).unwrap_err();
        assert!(matches!(err, ConfigError::Invariant(_)), "{cmd}: {err}");
    }
    let cfg = config(&interval("name = \"solve\"\nlambda = 20.0", false));
    assert_eq!(cfg.command.name, CommandName::Solve);
}

fn exit_code(body: &str) -> i32 {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    fs::write(&path, body).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_membrane"))
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    out.status.code().unwrap()
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(exit_code(&interval("name = \"lambda_star\"", false)), 0);
    // beyond the blow-up threshold no positive solution exists
    assert_eq!(exit_code(&interval("name = \"solve\"\nlambda = 1000.0", true)), 1);
    assert_eq!(exit_code(&interval("name = \"lambda_star\"\ncolour = 1", false)), 2);
    assert_eq!(exit_code(&interval("name = \"lambda_star\"", false).replace("p = 2.0", "p = 1.0")), 2);
}
