import numpy as np
import pytest

from menkf.arms import ArmSpec
from menkf.enkf import Ensemble
from menkf.exceptions import ConfigError, DataFormatError
from menkf.simgen import Replicate
from menkf.storage import (LoadedDataset, config_from_dict, config_to_dict,
                           dataset_header, load_checkpoint, read_dataset_csv,
                           save_checkpoint, sha256_file, verify_manifest,
                           write_dataset_csv, write_json, write_manifest,
                           write_rows_csv)
from menkf.trainer import MenkfConfig


def sample_replicate(n=5, p=2, q=3, seed=0):
    gen = np.random.default_rng(seed)
    return Replicate(
        v_f=gen.standard_normal((n, p)),
        v_g=gen.standard_normal((n, q)),
        labels=gen.integers(0, 2, size=n),
        target_logits=gen.standard_normal(n),
        true_prob=gen.uniform(0.01, 0.99, size=n),
    )


def sample_config(**kw):
    base = dict(arm_f=ArmSpec(2, (), "identity"), arm_g=ArmSpec(3, (4,), "tanh"),
                ensemble_size=8, init_var=2.0, seed=7)
    base.update(kw)
    return MenkfConfig(**base)


class TestDatasetCsv:
    def test_header_layout(self):
        assert dataset_header(2, 1) == ["emb_f_0", "emb_f_1", "emb_g_0",
                                        "target_logit", "true_prob", "label"]

    def test_round_trip_is_exact(self, tmp_path):
        rep = sample_replicate()
        path = tmp_path / "data.csv"
        write_dataset_csv(path, rep)
        loaded = read_dataset_csv(path)
        # repr serialization means floats survive bit for bit
        np.testing.assert_array_equal(loaded.v_f, rep.v_f)
        np.testing.assert_array_equal(loaded.v_g, rep.v_g)
        np.testing.assert_array_equal(loaded.target_logits, rep.target_logits)
        np.testing.assert_array_equal(loaded.true_prob, rep.true_prob)
        np.testing.assert_array_equal(loaded.labels, rep.labels)
        assert loaded.size == rep.size

    def test_rewrite_is_byte_identical(self, tmp_path):
        rep = sample_replicate(seed=3)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_dataset_csv(a, rep)
        write_dataset_csv(b, read_dataset_csv(a).to_replicate())
        assert a.read_bytes() == b.read_bytes()

    def test_to_replicate_requires_truth_columns(self):
        data = LoadedDataset(np.ones((2, 1)), np.ones((2, 1)),
                             np.zeros(2), None, None)
        with pytest.raises(DataFormatError):
            data.to_replicate()

    def test_optional_columns_default_to_none(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("emb_f_0,emb_g_0,target_logit\n0.5,1.5,-0.2\n")
        loaded = read_dataset_csv(path)
        assert loaded.true_prob is None and loaded.labels is None
        assert loaded.target_logits[0] == -0.2


class TestDatasetCsvErrors:
    def write(self, tmp_path, text):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        return path

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="empty file"):
            read_dataset_csv(self.write(tmp_path, ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(DataFormatError, match="no data rows"):
            read_dataset_csv(self.write(tmp_path, "emb_f_0,emb_g_0,target_logit\n"))

    def test_missing_target_column(self, tmp_path):
        with pytest.raises(DataFormatError, match="target_logit"):
            read_dataset_csv(self.write(tmp_path, "emb_f_0,emb_g_0\n1.0,2.0\n"))

    def test_missing_feature_block(self, tmp_path):
        with pytest.raises(DataFormatError, match="emb_g_"):
            read_dataset_csv(self.write(tmp_path, "emb_f_0,target_logit\n1.0,2.0\n"))

    def test_noncontiguous_feature_columns(self, tmp_path):
        text = "emb_f_0,emb_f_2,emb_g_0,target_logit\n1.0,2.0,3.0,4.0\n"
        with pytest.raises(DataFormatError, match="not contiguous"):
            read_dataset_csv(self.write(tmp_path, text))

    def test_bad_number_names_row_and_column(self, tmp_path):
        text = ("emb_f_0,emb_g_0,target_logit\n"
                "0.5,1.0,-0.2\n"
                "0.1,oops,0.3\n")
        with pytest.raises(DataFormatError, match=r"row 3, column 'emb_g_0'"):
            read_dataset_csv(self.write(tmp_path, text))

    def test_bad_label_names_column(self, tmp_path):
        text = ("emb_f_0,emb_g_0,target_logit,true_prob,label\n"
                "0.5,1.0,-0.2,0.4,1.5\n")
        with pytest.raises(DataFormatError, match=r"column 'label'.*not a integer"):
            read_dataset_csv(self.write(tmp_path, text))

    def test_short_row_reports_count(self, tmp_path):
        text = "emb_f_0,emb_g_0,target_logit\n0.5,1.0\n"
        with pytest.raises(DataFormatError, match="row 2 has 2 fields, expected 3"):
            read_dataset_csv(self.write(tmp_path, text))


class TestConfigDict:
    def test_round_trip(self):
        cfg = sample_config(fixed_arm_logit=0.25, jitter_var=0.01,
                            variance_init="gamma_shape_scale")
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_top_level_key(self):
        doc = config_to_dict(sample_config())
        doc["learning_rate"] = 0.1
        with pytest.raises(ConfigError, match="learning_rate"):
            config_from_dict(doc)

    def test_unknown_arm_key(self):
        doc = config_to_dict(sample_config())
        doc["arm_f"]["dropout"] = 0.5
        with pytest.raises(ConfigError, match="dropout"):
            config_from_dict(doc)

    def test_missing_arms(self):
        with pytest.raises(ConfigError, match="arm_f and arm_g"):
            config_from_dict({"ensemble_size": 10})

    def test_invalid_value_becomes_config_error(self):
        doc = config_to_dict(sample_config())
        doc["ensemble_size"] = 1
        with pytest.raises(ConfigError):
            config_from_dict(doc)


class TestCheckpoint:
    def roundtrip(self, tmp_path, cfg=None):
        cfg = cfg or sample_config()
        gen = np.random.default_rng(1)
        members = gen.standard_normal((cfg.ensemble_size, cfg.layout().dim))
        path = tmp_path / "model.menkf"
        save_checkpoint(path, Ensemble(members), cfg)
        return path, members, cfg

    def test_bitwise_round_trip(self, tmp_path):
        path, members, cfg = self.roundtrip(tmp_path)
        loaded, loaded_cfg = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.members, members)
        assert loaded.members.dtype == np.float64
        assert loaded_cfg == cfg

    def test_save_is_deterministic(self, tmp_path):
        path_a, members, cfg = self.roundtrip(tmp_path)
        path_b = tmp_path / "again.menkf"
        save_checkpoint(path_b, Ensemble(members), cfg)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_wrong_magic(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(raw)
        with pytest.raises(DataFormatError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[8] = 99
        path.write_bytes(raw)
        with pytest.raises(DataFormatError, match="version"):
            load_checkpoint(path)

    def test_truncated_body(self, tmp_path):
        path, *_ = self.roundtrip(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(DataFormatError, match="body is"):
            load_checkpoint(path)

    def test_edited_header_is_rejected(self, tmp_path):
        # same-length edit to the embedded config: the hash no longer matches
        path, *_ = self.roundtrip(tmp_path)
        raw = path.read_bytes()
        assert b'"seed": 7' in raw
        path.write_bytes(raw.replace(b'"seed": 7', b'"seed": 9', 1))
        with pytest.raises(DataFormatError, match="hash mismatch"):
            load_checkpoint(path)

    def test_not_a_file_shape(self, tmp_path):
        path = tmp_path / "junk.menkf"
        path.write_bytes(b"short")
        with pytest.raises(DataFormatError, match="not a checkpoint"):
            load_checkpoint(path)


class TestManifest:
    def test_verify_clean_and_tampered(self, tmp_path):
        (tmp_path / "a.csv").write_text("x\n1\n")
        (tmp_path / "b.csv").write_text("y\n2\n")
        manifest = tmp_path / "manifest.json"
        write_manifest(manifest, seed=0, scenario="well_specified",
                       files={"a.csv": tmp_path / "a.csv", "b.csv": tmp_path / "b.csv"})
        assert verify_manifest(manifest) == []
        (tmp_path / "a.csv").write_text("x\n999\n")
        assert verify_manifest(manifest) == ["a.csv"]
        (tmp_path / "b.csv").unlink()
        assert sorted(verify_manifest(manifest)) == ["a.csv", "b.csv"]

    def test_sha256_matches_known_digest(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(b"abc")
        assert sha256_file(path) == ("ba7816bf8f01cfea414140de5dae2223"
                                     "b00361a396177a9cb410ff61f20015ad")


class TestRowsCsv:
    def test_int_and_float_formatting(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_rows_csv(path, [{"step": 3, "value": 0.1}], ["step", "value"])
        assert path.read_bytes() == b"step,value\r\n3,0.1\r\n"

    def test_json_write_is_stable(self, tmp_path):
        path = tmp_path / "doc.json"
        write_json(path, {"b": 1, "a": [1, 2]})
        assert path.read_text() == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
