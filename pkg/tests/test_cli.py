import subprocess
import sys

import numpy as np
import pytest

from cdrfeat.cli import main
from cdrfeat.coherence import diffuse_coherence_model, long_term_coherence
from cdrfeat.io import read_features, read_pgm, read_wav, write_wav
from cdrfeat.stft import AnalysisConfig, analyze_array


@pytest.fixture(scope="module")
def stereo_wav(tmp_path_factory):
    p = tmp_path_factory.mktemp("wav") / "stereo.wav"
    assert main(["synth", "--out", str(p), "--duration", "1", "--snr-db", "5", "--doa", "45",
                 "--seed", "7"]) == 0
    return p


def _payload(path):
    raw = path.read_bytes()
    m, _ = read_features(path)
    return raw[len(raw) - m.n_frames * m.total_dim * 4:]


def test_extract_paper_diffuseness(stereo_wav, tmp_path):
    out = tmp_path / "f.cdrfeat"
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out), "--preset", "paper-diffuseness"]) == 0
    m, digest = read_features(out)
    assert m.layout == [("logmelspec", 24), ("delta", 24), ("meldiffuseness", 24)]
    assert m.n_frames == 98 and len(digest) == 32 and any(digest)


def test_extract_splice(stereo_wav, tmp_path):
    out = tmp_path / "s.cdrfeat"
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out), "--preset", "paper-noisy",
                 "--mvn", "--splice", "5"]) == 0
    m, _ = read_features(out)
    assert m.data.shape == (98, 792)


def test_extract_csv_and_heatmap(stereo_wav, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out), "--features",
                 "logmelspec,meldiffuseness", "--format", "csv", "--heatmap", str(tmp_path / "h.pgm")]) == 0
    m, _ = read_features(out)
    assert m.total_dim == 48
    assert read_pgm(tmp_path / "h_meldiffuseness.pgm").shape == (24, 98)


def test_mono_spatial_is_config_error(tmp_path, capsys):
    p = tmp_path / "mono.wav"
    write_wav(p, np.zeros(16000), 16000, "pcm16")
    assert main(["extract", "--in", str(p), "--out", str(tmp_path / "x"), "--preset", "paper-msc"]) == 1
    assert "two-channel" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert main(["extract", "--in", str(tmp_path / "nope.wav"), "--out", str(tmp_path / "x")]) == 2


def test_bad_flag_is_config_error():
    assert main(["extract", "--deltas", "7"]) == 1


def test_config_file_and_flag_override(stereo_wav, tmp_path, monkeypatch):
    conf = tmp_path / "c.conf"
    conf.write_text("preset = paper-msc\nsplice = 1\n")
    monkeypatch.setenv("CDRFEAT_CONFIG", str(conf))
    out = tmp_path / "a.cdrfeat"
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out)]) == 0
    assert read_features(out)[0].total_dim == 72 * 3
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out), "--splice", "0"]) == 0
    assert read_features(out)[0].total_dim == 72


def test_jobs_multiple_inputs(stereo_wav, tmp_path):
    second = tmp_path / "b.wav"
    second.write_bytes(stereo_wav.read_bytes())
    outdir = tmp_path / "feats"
    assert main(["extract", "--in", str(stereo_wav), str(second), "--out", str(outdir),
                 "--preset", "paper-noisy", "--jobs", "2"]) == 0
    assert _payload(outdir / "stereo.cdrfeat") == _payload(outdir / "b.cdrfeat")


def test_synth_deterministic(tmp_path):
    args = ["synth", "--snr-db", "0", "--doa", "45", "--duration", "10", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.wav")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.wav")]) == 0
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


def test_synth_prints_powers(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "a.wav"), "--duration", "1", "--snr-db", "0"]) == 0
    out = capsys.readouterr().out
    pc = float(out.split("coherent_power=")[1].split()[0])
    pd = float(out.split("diffuse_power=")[1].split()[0])
    assert pc == pytest.approx(pd, rel=1e-6)


def test_synth_coherent_broadside(tmp_path):
    p = tmp_path / "c.wav"
    assert main(["synth", "--out", str(p), "--coherent-only", "--doa", "90", "--duration", "1"]) == 0
    _, x = read_wav(p)
    assert np.array_equal(x[0], x[1])


def test_synth_diffuse_coherence(tmp_path):
    p = tmp_path / "d.wav"
    assert main(["synth", "--out", str(p), "--diffuse-only", "--duration", "5", "--seed", "7"]) == 0
    _, x = read_wav(p)
    acfg = AnalysisConfig()
    f = acfg.bin_freqs()
    mid = (f >= 500) & (f <= 4000)
    err = np.abs(long_term_coherence(analyze_array(x, acfg)) - diffuse_coherence_model(f))
    assert err[mid].max() < 0.1


def test_synth_invalid(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x.wav"), "--waves", "8"]) == 1


def test_enhance_zero_and_csv(tmp_path):
    p = tmp_path / "z.wav"
    write_wav(p, np.zeros((2, 8000)), 16000, "pcm16")
    out = tmp_path / "e.wav"
    assert main(["enhance", "--in", str(p), "--out", str(out), "--diffuseness-csv", str(tmp_path / "d.csv")]) == 0
    _, y = read_wav(out)
    assert np.all(y == 0)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "frame,time_s,mean_diffuseness" and len(lines) == 1 + 48


def test_report(stereo_wav, tmp_path):
    assert main(["report", "--in", str(stereo_wav), "--outdir", str(tmp_path / "r")]) == 0
    for name in ("features.csv", "features.png", "coherence.csv", "coherence.png", "diffuseness.png",
                 "meldiffuseness.pgm"):
        assert (tmp_path / "r" / name).stat().st_size > 0


def _stream(data, *flags):
    return subprocess.run([sys.executable, "-m", "cdrfeat.cli", "stream", *flags], input=data,
                          capture_output=True)


def test_stream_matches_extract(stereo_wav, tmp_path):
    out = tmp_path / "b.cdrfeat"
    assert main(["extract", "--in", str(stereo_wav), "--out", str(out), "--preset", "paper-diffuseness"]) == 0
    pcm = stereo_wav.read_bytes()[44:]
    res = _stream(pcm, "--preset", "paper-diffuseness")
    assert res.returncode == 0, res.stderr
    assert res.stdout == _payload(out)


def test_stream_empty():
    res = _stream(b"")
    assert res.returncode == 0 and res.stdout == b""


def test_stream_malformed():
    res = _stream(b"\x00" * 7)
    assert res.returncode == 2
