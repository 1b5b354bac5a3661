"""Reproduce the MCU footprint/inference table and the per-scenario hourly cost table."""

import argparse

from shm_edge.deploy import (
    KB,
    REFERENCE_ROWS,
    SCENARIOS,
    estimate_footprint,
    estimate_inference_cost,
    fit_footprint_overheads,
    fit_inference_constants,
    scenario_ledger,
    traffic_ratio,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--header-overhead", type=float, default=1.0,
                    help="multiplier on streamed bytes (780/720 models protocol headers)")
    ap.add_argument("--verdict-bytes", type=int, default=3)
    args = ap.parse_args()

    f0, r0, b = fit_footprint_overheads()
    print(f"# fitted overheads: flash {f0:.0f} B, ram {r0:.0f} B, {b:.4f} B per matrix weight")
    print(f"# fitted inference constants: {fit_inference_constants()}")
    print("input_s,M,k,flash_kB,ref_flash_kB,ram_kB,ref_ram_kB,fits,energy_uJ,ref_energy_uJ,latency_ms")
    for r in REFERENCE_ROWS:
        fp = estimate_footprint(r.M, r.k, 4)
        ic = estimate_inference_cost(r.M, r.k)
        print(f"{r.input_dim_s},{r.M},{r.k},{fp.flash_bytes / KB:.2f},{r.flash_kb},{fp.ram_bytes / KB:.2f},"
              f"{r.ram_kb if r.ram_kb is not None else ''},{fp.fits},{ic.energy_j * 1e6:.2f},"
              f"{r.energy_uj if r.energy_uj is not None else ''},{ic.latency_s * 1e3:.3f}")
    print()
    print("scenario,traffic_B,packets,radio_J,sleep_J,compute_J,gathering_J,storage_J,total_J")
    led = {}
    for s in SCENARIOS:
        lg = led[s] = scenario_ledger(s, verdict_bytes=args.verdict_bytes, header_overhead=args.header_overhead)
        print(f"{s},{lg.traffic_bytes},{lg.packets},{lg.radio_energy_j:.4f},{lg.sleep_energy_j:.3f},"
              f"{lg.compute_energy_j:.5f},{lg.gathering_energy_j:.3f},{lg.storage_energy_j:.3f},"
              f"{lg.total_energy_j:.4f}")
    print(f"# cloud/edge traffic ratio: {traffic_ratio(led['cloud'], led['edge']):.4g}")


if __name__ == "__main__":
    main()
