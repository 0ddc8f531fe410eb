import json

import numpy as np
import pytest

from lanelock.imagestore import (
    GeoPose,
    ImageryNotFound,
    LocalDirectoryProvider,
    StoreError,
    add_record,
    cache_name,
    fetch,
    load_image,
    open_store,
    query_grid,
)
from lanelock.raster import save_png

from oracles import nearest_record_bruteforce


def make_image(seed: int, size: int = 8) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(size, size, 3)).astype(np.uint8)


def seed_store(tmp_path, poses, size=8):
    store = open_store(tmp_path)
    for i, pose in enumerate(poses):
        img_path = tmp_path / f"src_{i}.png"
        save_png(make_image(i, size), img_path)
        add_record(store, img_path, pose, record_id=f"r{i}", captured="2015-07-01")
    return store


class TestGeoPose:
    def test_heading_normalized(self):
        assert GeoPose(0, 0, 370.0, 0).heading == 10.0
        assert GeoPose(0, 0, -5.0, 0).heading == 355.0
        assert GeoPose(0, 0, 360.0, 0).heading == 0.0

    @pytest.mark.parametrize("kw", [{"lat": 91}, {"lat": -91}, {"lon": 181}, {"pitch": 95}])
    def test_range_validation(self, kw):
        args = {"lat": 0.0, "lon": 0.0, "heading": 0.0, "pitch": 0.0, **kw}
        with pytest.raises(ValueError):
            GeoPose(**args)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            GeoPose(float("nan"), 0.0)


class TestOpenStore:
    def test_empty_directory(self, tmp_path):
        assert len(open_store(tmp_path)) == 0

    def test_count_preserved(self, tmp_path):
        poses = [GeoPose(40 + i * 1e-4, -75.0, 180.0, 0.0) for i in range(9)]
        seed_store(tmp_path, poses)
        assert len(open_store(tmp_path)) == 9

    def test_round_trip_identical_fields(self, tmp_path):
        pose = GeoPose(44.9745, -93.2704977, 218.36, -1.5)
        store = seed_store(tmp_path, [pose])
        rec = open_store(tmp_path).records[0]
        assert rec.pose == pose
        assert rec.id == "r0"
        assert rec.captured == "2015-07-01"
        assert np.array_equal(load_image(store, rec), make_image(0))

    def test_missing_lat_field_names_line(self, tmp_path):
        row = {"id": "a", "lon": 1.0, "heading": 0.0, "pitch": 0.0, "captured": "", "file": "x.png"}
        (tmp_path / "index.jsonl").write_text(json.dumps(row) + "\n")
        with pytest.raises(StoreError, match="line 1.*lat"):
            open_store(tmp_path)

    def test_bad_json_names_line(self, tmp_path):
        seed_store(tmp_path, [GeoPose(1, 1)])
        with open(tmp_path / "index.jsonl", "a") as fh:
            fh.write("{oops\n")
        with pytest.raises(StoreError, match="line 2"):
            open_store(tmp_path)

    def test_missing_image_names_record_id(self, tmp_path):
        row = {
            "id": "ghost", "lat": 1.0, "lon": 1.0, "heading": 0.0, "pitch": 0.0,
            "captured": "", "file": "images/ghost.png",
        }
        (tmp_path / "index.jsonl").write_text(json.dumps(row) + "\n")
        with pytest.raises(StoreError, match="ghost"):
            open_store(tmp_path)

    def test_duplicate_id_rejected_on_add(self, tmp_path):
        store = seed_store(tmp_path, [GeoPose(1, 1)])
        img_path = tmp_path / "again.png"
        save_png(make_image(5), img_path)
        with pytest.raises(StoreError, match="duplicate"):
            add_record(store, img_path, GeoPose(2, 2), record_id="r0")

    def test_non_png_rejected_on_add(self, tmp_path):
        store = open_store(tmp_path)
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"\xff\xd8\xff junk")
        with pytest.raises(StoreError):
            add_record(store, bad, GeoPose(1, 1))


class TestQueryGrid:
    def test_exact_lattice(self, tmp_path):
        step = 1e-4
        poses = [
            GeoPose(40.0 + (1 - i) * step, -75.0 + (j - 1) * step, 180.0, 0.0)
            for i in range(3)
            for j in range(3)
        ]
        store = seed_store(tmp_path, poses)
        got = query_grid(store, GeoPose(40.0, -75.0, 180.0, 0.0), step, 3)
        assert [r.pose for r in got] == poses

    def test_dedup_single_record(self, tmp_path):
        store = seed_store(tmp_path, [GeoPose(40.0, -75.0)])
        got = query_grid(store, GeoPose(40.0, -75.0), 1e-4, 3)
        assert len(got) == 1

    def test_perturbed_records_match_bruteforce(self, tmp_path):
        step = 1e-4
        r = np.random.default_rng(99)
        poses = []
        for i in range(3):
            for j in range(3):
                dlat, dlon = r.uniform(-step / 3, step / 3, size=2)
                poses.append(GeoPose(40.0 + (1 - i) * step + dlat, -75.0 + (j - 1) * step + dlon))
        store = seed_store(tmp_path, poses)
        got = query_grid(store, GeoPose(40.0, -75.0), step, 3)
        # oracle: brute-force nearest per lattice point, deduplicated in order
        expected, seen = [], set()
        for i in range(3):
            for j in range(3):
                rec = nearest_record_bruteforce(store.records, 40.0 + (1 - i) * step, -75.0 + (j - 1) * step)
                if rec.id not in seen:
                    seen.add(rec.id)
                    expected.append(rec.id)
        assert [g.id for g in got] == expected
        # offsets <= step/3 guarantee each lattice point keeps its own record
        assert len(got) == 9

    def test_empty_store(self, tmp_path):
        assert query_grid(open_store(tmp_path), GeoPose(0, 0), 1e-4, 3) == []

    def test_pure_function(self, tmp_path):
        store = seed_store(tmp_path, [GeoPose(40.0, -75.0), GeoPose(40.0001, -75.0)])
        a = query_grid(store, GeoPose(40.0, -75.0), 1e-4, 3)
        b = query_grid(store, GeoPose(40.0, -75.0), 1e-4, 3)
        assert a == b

    @pytest.mark.parametrize("n,step", [(2, 1e-4), (0, 1e-4), (3, 0.0), (3, -1.0)])
    def test_preconditions(self, tmp_path, n, step):
        store = seed_store(tmp_path, [GeoPose(0, 0)])
        with pytest.raises(ValueError):
            query_grid(store, GeoPose(0, 0), step, n)


class CountingProvider:
    def __init__(self, image):
        self.image = image
        self.calls = 0

    def get_image(self, pose, width, height, fov):
        self.calls += 1
        if pose.lat > 50:
            raise ImageryNotFound("off the map")
        return self.image


class TestFetch:
    def test_identity_passthrough_local_provider(self, tmp_path):
        img = make_image(3, size=16)
        provider_dir = tmp_path / "imagery"
        provider_dir.mkdir()
        pose = GeoPose(40.0, -75.0, 12.0, 0.0)
        save_png(img, provider_dir / cache_name(pose, 16, 16, 90.0))
        store = open_store(tmp_path)
        got = fetch(store, LocalDirectoryProvider(provider_dir), pose, 16, 16, 90.0)
        assert np.array_equal(got, img)

    def test_second_fetch_served_from_cache(self, tmp_path):
        provider = CountingProvider(make_image(4, size=16))
        store = open_store(tmp_path)
        pose = GeoPose(40.0, -75.0)
        a = fetch(store, provider, pose, 16, 16, 90.0)
        b = fetch(store, provider, pose, 16, 16, 90.0)
        assert provider.calls == 1
        assert np.array_equal(a, b)

    def test_cache_survives_provider_deletion(self, tmp_path):
        provider = CountingProvider(make_image(4, size=16))
        store = open_store(tmp_path)
        pose = GeoPose(40.0, -75.0)
        a = fetch(store, provider, pose, 16, 16, 90.0)
        b = fetch(store, None, pose, 16, 16, 90.0)  # backend gone entirely
        assert np.array_equal(a, b)

    def test_not_found_propagates(self, tmp_path):
        provider = CountingProvider(make_image(4, size=16))
        store = open_store(tmp_path)
        with pytest.raises(ImageryNotFound):
            fetch(store, provider, GeoPose(60.0, 0.0), 16, 16, 90.0)

    def test_cache_path_scheme(self, tmp_path):
        provider = CountingProvider(make_image(4, size=16))
        store = open_store(tmp_path)
        fetch(store, provider, GeoPose(40.0, -75.5, 211.125, -2.0), 16, 16, 90.0)
        expected = "40.00000000_-75.50000000_211.12_-2.00_16x16_90.0.png"
        assert (tmp_path / "cache" / expected).exists()
