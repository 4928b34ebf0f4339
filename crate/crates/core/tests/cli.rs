use std::fs;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_perc-sle-lab"));
    c.env("PERC_SLE_LAB_WORKERS", "2");
    c
}

#[test]
fn oracle_agrees_with_manifest() {
    let out = bin().arg("oracle").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("agrees").count(), 3, "{text}");
}

#[test]
fn exit_code_follows_the_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--preset", "color_switch", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json = fs::read_to_string(dir.path().join("color_switch.json")).unwrap();
    assert!(json.contains("\"pass\": true"));

    // a coarse square is visibly biased: the 0.01 band must fail
    let cfg = dir.path().join("coarse.toml");
    fs::write(
        &cfg,
        r#"
name = "coarse"
seed = 3
kind = "crossing"
[params]
shape = { kind = "square", side = 1.0 }
mesh = 0.05
n = 4000
band = "square_crossing"
"#,
    )
    .unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nkind = \"crossing\"\n[params]\nmesh = 0.1\n").unwrap();
    assert_eq!(bin().arg("run").arg(&bad).output().unwrap().status.code(), Some(2));
}

#[test]
fn stored_results_replay_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tri.toml");
    fs::write(
        &cfg,
        r#"
name = "tri"
seed = 9
chunk = 200
kind = "cardy_sweep"
[params]
shape = { kind = "equilateral_triangle", side = 1.0 }
mesh = 0.1
p4 = [0.5]
n = 1000
band = "triangle_linearity"
"#,
    )
    .unwrap();
    let a = bin().arg("run").arg(&cfg).output().unwrap().stdout;
    let b = bin().arg("run").arg(&cfg).env("PERC_SLE_LAB_WORKERS", "1").output().unwrap().stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn curve_tools_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let drive = dir.path().join("drive.csv");
    fs::write(&drive, "t,u\n0,0\n0.5,0.3\n1,-0.2\n").unwrap();
    let trace = dir.path().join("trace.csv");
    let out = bin()
        .arg("loewner-forward")
        .arg(&drive)
        .args(["--dt-max", "1e-3", "--samples", "100", "--out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success());
    // keep x,y columns for the zipper
    let text = fs::read_to_string(&trace).unwrap();
    let xy: String = std::iter::once("x,y".to_string())
        .chain(text.lines().skip(1).map(|l| l.split(',').skip(1).collect::<Vec<_>>().join(",")))
        .collect::<Vec<_>>()
        .join("\n");
    let curve = dir.path().join("curve.csv");
    fs::write(&curve, xy).unwrap();
    let out = bin().arg("loewner-zip").arg(&curve).output().unwrap();
    assert!(out.status.success());
    let rows: Vec<(f64, f64)> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let (t_end, u_end) = *rows.last().unwrap();
    assert!((t_end - 1.0).abs() < 0.02, "{t_end}");
    assert!((u_end + 0.2).abs() < 0.05, "{u_end}");

    let out = bin()
        .arg("curvestats")
        .arg(&curve)
        .args(["--r-max", "0.5", "--r-min", "0.05", "--radii", "5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    for l in String::from_utf8(out.stdout).unwrap().lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2], "{l}");
    }
}

#[test]
fn sampling_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sle", "--kappa", "4", "--T", "0.5", "--dt", "0.005", "--paths", "2", "--out-dir"])
        .arg(dir.path())
        .arg("--svg")
        .arg(dir.path().join("sle.svg"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["driving_0.csv", "trace_1.csv", "sle.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let out = bin()
        .args(["explore", "--mesh", "0.1", "--seed", "4", "--svg"])
        .arg(dir.path().join("ex.svg"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("x,y"));
    assert!(fs::read_to_string(dir.path().join("ex.svg")).unwrap().contains("polyline"));
    let out = bin()
        .args(["crossing", "--shape", "rectangle", "--aspect", "2", "--mesh", "0.1", "--n", "500"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    let out = bin().args(["cardy", "--shape", "rectangle", "--aspect", "2"]).output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("phi 0.175646893"));
}
