import shutil
import subprocess
from pathlib import Path

DATA = Path(__file__).parent / "data"


def test_oamtomo_available_imports():
    import oamtomo

    # make sure we don't expose too few, or too much
    imps = [i for i in dir(oamtomo) if not i.startswith("__")]
    assert set(imps) == set(
        [
            "AhstConfig",
            "BasisSpec",
            "CapacityError",
            "Circuit",
            "ConfigError",
            "ExperimentConfig",
            "FormatError",
            "Grid",
            "IntensityGrid",
            "InvalidArgumentError",
            "InvariantViolation",
            "MarginalSet",
            "ModeIndex",
            "NoiseConfig",
            "OamtomoError",
            "PreconditionError",
            "ResolutionError",
            "StateSpec",
            "TomographyReport",
            "TruncationError",
            "assemble_full_density",
            "compose",
            "fidelity",
            "full_helicity_sorter",
            "gate_hx",
            "gate_hy",
            "gate_phase",
            "hs_even_cascade",
            "hs_even_slm",
            "hs_odd",
            "load_config",
            "make_basis",
            "nearest_psd",
            "oam_sorter",
            "partial_helicity_sorter",
            "pure_state",
            "radial_mode_sorter",
            "routing_table",
            "run_full_qst",
            "trace_distance",
            # things we actually don't want to have exported
            "ahst",
            "circuits",
            "config",
            "const",
            "elements",
            "errors",
            "formats",
            "hilbert",
            "models",
            "tomography",
            "importlib",
        ]
    )


def run(*args, cwd=None):
    return subprocess.run(  # noqa: S603
        ["oamtomo", *args],  # noqa: S607
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def test_cli():
    cproc = subprocess.run(["oamtomo", "--version"])  # noqa: S603, S607
    assert cproc.returncode == 0

    cproc = subprocess.run(["oamtomo", "--help"])  # noqa: S603, S607
    assert cproc.returncode == 0


def test_cli_routing_check():
    cproc = run("routing", "fhs", "--lmax", "4", "--check")
    assert cproc.returncode == 0
    assert "Checks passed" in cproc.stdout


def test_cli_routing_csv():
    cproc = run("routing", "oam-sorter", "--lmax", "2", "--beta", "pi/2", "--csv")
    assert cproc.returncode == 0
    lines = cproc.stdout.splitlines()
    assert lines[0] == "in_path,ell,p,out_path,out_port,out_ell,out_p,re,im"
    ports = {int(row.split(",")[1]): row.split(",")[4] for row in lines[1:]}
    assert ports == {1: "b", 2: "a", -1: "b", -2: "a", 0: "a"}


def test_cli_routing_netlist(tmp_path):
    cproc = run("routing", "hx", "--lmax", "2", "--netlist", str(tmp_path / "hx.net"), "--check")
    assert cproc.returncode == 0
    assert (tmp_path / "hx.net").read_text().startswith("# oamtomo v")


def test_cli_routing_unknown_device():
    cproc = run("routing", "prism")
    assert cproc.returncode == 1
    assert "Unknown device 'prism'" in cproc.stderr


def test_cli_scaling():
    cproc = run("scaling", "--nmin", "2", "--nmax", "4")
    assert cproc.returncode == 0
    assert cproc.stdout.splitlines() == ["N,modes,cascade,slm", "2,4,12,12", "3,8,24,12", "4,16,36,12"]


def test_cli_tomography_exact(tmp_path):
    shutil.copy(DATA / "pure_ell2.ini", tmp_path)
    cproc = run("tomography", "--config", "pure_ell2.ini", cwd=tmp_path)
    assert cproc.returncode == 0, cproc.stderr
    out = tmp_path / "results"
    assert {p.name for p in out.iterdir()} == {"report.txt", "rho_reconstructed.txt", "rho_truth.txt"}
    assert "sigma_orientation = dagger" in (out / "report.txt").read_text()


def test_cli_tomography_bad_config(tmp_path):
    (tmp_path / "bad.ini").write_text("[basis]\nell_max = 0\n")
    cproc = run("tomography", "--config", str(tmp_path / "bad.ini"))
    assert cproc.returncode == 1
    assert "line 2: ell_max must be ≥ 1" in cproc.stderr


def test_cli_tomography_needs_config(tmp_path):
    cproc = run("tomography", cwd=tmp_path)
    assert cproc.returncode == 1


def test_cli_tomography_ahst(tmp_path):
    shutil.copy(DATA / "ahst_ell1.ini", tmp_path)
    cproc = run("tomography", "--config", "ahst_ell1.ini", cwd=tmp_path)
    assert cproc.returncode == 0, cproc.stderr
    out = tmp_path / "results"
    images = {
        f"intensity_{label}_{port}.{ext}"
        for label in ("identity", "hx", "hy")
        for port in ("plus", "minus")
        for ext in ("csv", "pgm")
    }
    assert {p.name for p in out.iterdir()} == {
        "report.txt",
        "rho_reconstructed.txt",
        "rho_truth.txt",
    } | images
    assert "provenance = ahst-reconstructed" in (out / "report.txt").read_text()


def test_cli_tomography_same_seed_same_report(tmp_path):
    shutil.copy(DATA / "ahst_ell1.ini", tmp_path)
    report = tmp_path / "results" / "report.txt"
    assert run("tomography", "--config", "ahst_ell1.ini", cwd=tmp_path).returncode == 0
    first = report.read_bytes()
    assert run("tomography", "--config", "ahst_ell1.ini", cwd=tmp_path).returncode == 0
    assert report.read_bytes() == first


def test_cli_tomography_below_threshold(tmp_path):
    text = (DATA / "ahst_ell1.ini").read_text().replace("threshold = 0.9", "threshold = 1.0")
    (tmp_path / "strict.ini").write_text(text)
    cproc = run("tomography", "--config", "strict.ini", cwd=tmp_path)
    assert cproc.returncode == 2
    assert "Fidelity below threshold" in cproc.stdout
    assert (tmp_path / "results" / "report.txt").exists()
