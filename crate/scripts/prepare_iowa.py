#!/usr/bin/env python3
"""Builds the Iowa input files from public sources.

Counties come from the Census cartographic boundary shapefile
(cb_2016_us_county_500k, as shipped in the plotly-geo wheel). Populations are
joined from a CSV with columns GEOID,POP (data/iowa/county_pop_1990.csv holds
the 1990 census counts from the PySAL NAT example dataset). Post offices are approximated by
ZIP code points from the GeoNames postal-code dump (US.txt) and are written
as id,lon,lat.

    prepare_iowa.py --shp-dir DIR --out data/iowa [--pop pop.csv] [--zips US.txt]
"""

import argparse
import csv
import json
import struct
from pathlib import Path

IOWA_FIPS = "19"


def read_dbf(path):
    data = path.read_bytes()
    n_records, header_len, record_len = struct.unpack("<IHH", data[4:12])
    fields = []
    pos = 32
    while data[pos] != 0x0D:
        name = data[pos : pos + 11].split(b"\0")[0].decode("ascii")
        length = data[pos + 16]
        fields.append((name, length))
        pos += 32
    rows = []
    for r in range(n_records):
        off = header_len + r * record_len + 1
        row = {}
        for name, length in fields:
            row[name] = data[off : off + length].decode("latin-1").strip()
            off += length
        rows.append(row)
    return rows


def read_shp_polygons(path):
    data = path.read_bytes()
    pos = 100
    shapes = []
    while pos < len(data):
        _, content_len = struct.unpack(">ii", data[pos : pos + 8])
        pos += 8
        end = pos + content_len * 2
        shape_type = struct.unpack("<i", data[pos : pos + 4])[0]
        if shape_type == 0:
            shapes.append([])
            pos = end
            continue
        assert shape_type == 5, f"unexpected shape type {shape_type}"
        n_parts, n_points = struct.unpack("<ii", data[pos + 36 : pos + 44])
        parts = list(struct.unpack(f"<{n_parts}i", data[pos + 44 : pos + 44 + 4 * n_parts]))
        pts_off = pos + 44 + 4 * n_parts
        coords = struct.unpack(f"<{2 * n_points}d", data[pts_off : pts_off + 16 * n_points])
        points = [(coords[2 * i], coords[2 * i + 1]) for i in range(n_points)]
        parts.append(n_points)
        rings = [points[parts[i] : parts[i + 1]] for i in range(n_parts)]
        shapes.append(rings)
        pos = end
    return shapes


def signed_area(ring):
    return 0.5 * sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(ring, ring[1:]))


def point_in_ring(p, ring):
    x, y = p
    inside = False
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            inside = not inside
    return inside


def to_multipolygon(rings):
    """Shapefile rings: clockwise outer, counter-clockwise holes."""
    outers, holes = [], []
    for r in rings:
        (outers if signed_area(r) < 0 else holes).append(r)
    polys = [[list(reversed(o))] for o in outers]
    for h in holes:
        for poly, o in zip(polys, outers):
            if point_in_ring(h[0], o):
                poly.append(list(reversed(h)))
                break
    return [[[list(pt) for pt in ring] for ring in poly] for poly in polys]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--shp-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--pop", type=Path)
    ap.add_argument("--zips", type=Path, help="GeoNames US.txt postal-code file")
    args = ap.parse_args()

    stem = args.shp_dir / "cb_2016_us_county_500k"
    rows = read_dbf(stem.with_suffix(".dbf"))
    shapes = read_shp_polygons(stem.with_suffix(".shp"))
    pops = {}
    if args.pop:
        with args.pop.open() as f:
            pops = {r["GEOID"]: int(r["POP"]) for r in csv.DictReader(f)}

    features = []
    for row, rings in zip(rows, shapes):
        if row["STATEFP"] != IOWA_FIPS:
            continue
        props = {"GEOID": row["GEOID"], "NAME": row["NAME"]}
        if pops:
            props["POP"] = pops[row["GEOID"]]
        features.append(
            {
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "MultiPolygon", "coordinates": to_multipolygon(rings)},
            }
        )
    features.sort(key=lambda f: f["properties"]["GEOID"])
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {"type": "FeatureCollection", "features": features}
    (args.out / "counties.geojson").write_text(json.dumps(doc))
    print(f"{len(features)} counties")

    if args.zips:
        # GeoNames postal-code dump: tab separated, no header
        with args.zips.open(encoding="utf-8") as f, (args.out / "post_offices.csv").open("w", newline="") as out:
            w = csv.writer(out)
            w.writerow(["id", "lon", "lat"])
            n = 0
            for line in f:
                cols = line.rstrip("\n").split("\t")
                if cols[0] == "US" and cols[4] == "IA":
                    w.writerow([cols[1], cols[10], cols[9]])
                    n += 1
        print(f"{n} offices")


if __name__ == "__main__":
    main()
