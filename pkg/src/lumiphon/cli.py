"""Batch command-line front end.

Subcommands: modes, hr, spectrum, oracle, thermo, dissoc.  Exit codes:
0 success, 2 invalid input or flags, 3 numerical failure.  Outputs are
written atomically and are byte-identical across reruns with the same
inputs and flags (deterministic single-threaded mode is the default).

numpy is imported lazily so the thread pinning below takes effect before
any BLAS library loads.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .errors import InputError, LumiphonError, NumericalError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_FIXED_TIMESTAMP = "1970-01-01T00:00:00Z"


def _pin_threads(n: int):
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _parse_window(text: str):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"window must look like LO:HI in eV, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lumiphon",
        description="Phonon sidebands and defect energetics from first-principles inputs.",
    )
    parser.add_argument("--version", action="version", version=f"lumiphon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="diagonalize a Hessian into phonon modes")
    p.add_argument("--structure", required=True)
    p.add_argument("--hessian", required=True)
    p.add_argument("--asr", action="store_true", help="enforce the acoustic sum rule")
    p.add_argument("--cutoff", type=float, default=115.0, help="bulk cutoff in meV")
    p.add_argument("--out", required=True, help="phonon basis JSON")
    p.add_argument("--table", help="per-mode TSV (energy, localization, LVM flag)")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("hr", help="per-mode coupling from a geometry or force change")
    p.add_argument("--structure", required=True)
    p.add_argument("--modes", required=True, help="phonon basis JSON")
    p.add_argument("--pair", help="geometry pair JSON")
    p.add_argument("--forces", help="force delta JSON")
    p.add_argument("--out", required=True, help="coupling JSON")
    p.add_argument("--stem", help="stem TSV (energy, S_k, cumulative)")
    p.set_defaults(func=cmd_hr)

    p = sub.add_parser("spectrum", help="emission lineshape from a coupling document")
    p.add_argument("--hr", required=True)
    p.add_argument("--zpl", type=float, required=True, help="zero-phonon line in eV")
    p.add_argument("--gamma", type=float, default=1.0, help="Lorentzian damping in meV")
    p.add_argument("--sigma", type=float, default=2.0, help="mode smearing in meV")
    p.add_argument("--window", type=_parse_window, help="output window LO:HI in eV")
    p.add_argument("--step", type=float, default=0.1, help="output step in meV")
    p.add_argument("--no-omega-cubed", action="store_true")
    p.add_argument("--time-step", type=float, help="override the time step in fs")
    p.add_argument("--time-span", type=float, help="override the time span in fs")
    p.add_argument("--cutoff", type=float, default=115.0, help="LVM cutoff in meV")
    p.add_argument("--out", required=True, help="spectrum TSV")
    p.add_argument("--peaks", help="labelled sideband peaks TSV")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("oracle", help="brute-force ladder spectrum for few modes")
    p.add_argument("--hr", required=True)
    p.add_argument("--zpl", type=float, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument(
        "--sigma",
        type=float,
        default=2.0,
        help="per-line quanta-scaled smearing in meV; 0 for pure Lorentzians",
    )
    p.add_argument("--max-quanta", type=int, default=16)
    p.add_argument("--window", type=_parse_window)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--sticks", help="stick list TSV with quanta labels")
    p.add_argument("--compare", help="spectrum TSV to measure an L1 distance against")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("thermo", help="formation-energy envelopes and transition levels")
    p.add_argument("--defects", required=True, help="defect table JSON")
    p.add_argument("--envelope", required=True, help="envelope samples TSV")
    p.add_argument("--transitions", required=True, help="transition levels TSV")
    p.add_argument("--windows", help="stability windows TSV")
    p.add_argument("--fermi-step", type=float, default=1.0, help="sampling step in meV")
    p.set_defaults(func=cmd_thermo)

    p = sub.add_parser("dissoc", help="single-atom removal energies")
    p.add_argument("--energies", required=True, help="dissociation table JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dissoc)

    for sp in sub.choices.values():
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--manifest", help="write an input-checksum manifest here")
        sp.add_argument(
            "--no-deterministic",
            action="store_true",
            help="allow wall-clock timestamps in the manifest",
        )
    return parser


def _write_manifest(args, input_paths):
    if not args.manifest:
        return
    from . import io as lio

    if args.no_deterministic:
        import datetime

        stamp = datetime.datetime.now(datetime.timezone.utc).strftime(
            "%Y-%m-%dT%H:%M:%SZ"
        )
    else:
        stamp = _FIXED_TIMESTAMP
    manifest = lio.build_manifest(
        input_paths, __version__, getattr(args, "command_line", ""), stamp
    )
    lio.write_manifest(manifest, args.manifest, overwrite=True)


def cmd_modes(args) -> int:
    from . import io as lio
    from . import phonons

    structure = lio.parse_structure(lio.load_document(args.structure))
    hessian = lio.parse_hessian(lio.load_document(args.hessian), structure)
    hessian = phonons.symmetrize(hessian)
    provenance = {
        "hessian_sha256": lio.sha256_file(args.hessian),
        "asr_applied": bool(args.asr),
        "cutoff_bulk_mev": args.cutoff,
        "tool_version": __version__,
    }
    if args.asr:
        hessian, report = phonons.apply_asr(hessian, structure.masses)
        provenance["pre_asr_norms_mev"] = report.pre_norms_mev.tolist()
        provenance["post_asr_norms_mev"] = report.post_norms_mev.tolist()
    import dataclasses

    basis = phonons.diagonalize(hessian, structure)
    basis = dataclasses.replace(basis, cutoff_bulk_mev=args.cutoff)
    lvm = phonons.classify_lvm(basis, args.cutoff)
    provenance["lvm_indices"] = lvm
    ipr = phonons.localization_table(basis)
    lio.write_phonon_basis(basis, args.out, provenance, overwrite=True)
    if args.table:
        lvm_set = set(lvm)
        lio.write_table_tsv(
            args.table,
            (
                f"lumiphon modes v{__version__}",
                f"cutoff_mev = {args.cutoff} ; asr = {str(bool(args.asr)).lower()}",
            ),
            ("mode", "omega_mev", "ipr", "lvm"),
            (
                (k, basis.omegas_mev[k], ipr[k], k in lvm_set)
                for k in range(basis.nmodes)
            ),
            overwrite=True,
        )
    _write_manifest(args, [args.structure, args.hessian])
    print(f"modes: {basis.nmodes}  lvm: {len(lvm)}")
    return 0


def cmd_hr(args) -> int:
    from . import io as lio
    from . import vibronic
    from .errors import DimensionMismatch

    if bool(args.pair) == bool(args.forces):
        raise InputError("give exactly one of --pair or --forces")
    structure = lio.parse_structure(lio.load_document(args.structure))
    basis, _ = lio.parse_phonon_basis(lio.load_document(args.modes))
    if basis.nmodes != 3 * structure.natoms:
        raise DimensionMismatch(
            f"basis has {basis.nmodes} modes but structure has {structure.natoms} atoms"
        )
    if args.pair:
        pair = lio.parse_geometry_pair(lio.load_document(args.pair), structure)
        qk = vibronic.qk_from_displacement(basis, pair, structure.masses)
    else:
        delta = lio.parse_force_delta(lio.load_document(args.forces), structure)
        qk = vibronic.qk_from_forces(basis, delta, structure.masses)
    hr = vibronic.partial_hr(qk, basis.omegas_mev)
    lio.write_hr(hr, args.out, overwrite=True)
    if args.stem:
        lio.write_stem_tsv(
            args.stem,
            hr,
            (
                f"lumiphon hr v{__version__}",
                f"route = {'pair' if args.pair else 'forces'} ; total_s = {hr.total:.9g}",
            ),
            overwrite=True,
        )
    _write_manifest(
        args, [args.structure, args.modes, args.pair or args.forces]
    )
    print(f"total_s = {hr.total:.9g}")
    return 0


def cmd_spectrum(args) -> int:
    import numpy as np

    from . import io as lio
    from . import vibronic
    from .model import LineshapeConfig

    hr = lio.parse_hr(lio.load_document(args.hr))
    zpl_mev = args.zpl * 1000.0
    live = hr.sk > 0.0
    omega_max = float(hr.omegas_mev[live].max()) if np.any(live) else 0.0
    if args.window is None:
        lo_mev, hi_mev = vibronic.default_window_mev(
            zpl_mev, omega_max, hr.total, args.gamma, args.sigma
        )
        window = (lo_mev / 1000.0, hi_mev / 1000.0)
    else:
        window = args.window
    config = LineshapeConfig(
        zpl_ev=args.zpl,
        gamma_mev=args.gamma,
        sigma_mev=args.sigma,
        time_step_fs=args.time_step,
        time_span_fs=args.time_span,
        window_ev=window,
        step_mev=args.step,
        omega_cubed=not args.no_omega_cubed,
    )
    sd = vibronic.spectral_density(hr, args.sigma)
    reach = max(zpl_mev - window[0] * 1000.0, abs(window[1] * 1000.0 - zpl_mev))
    tgrid = vibronic.make_time_grid(
        omega_max, hr.total, args.gamma, reach, args.time_step, args.time_span
    )
    gf = vibronic.generating_function(sd, tgrid)
    ls = vibronic.lineshape(gf, config)
    lvm = [int(k) for k in np.nonzero(hr.omegas_mev > args.cutoff)[0]]
    peaks = vibronic.effective_mode_report(hr, ls, lvm or None)
    header = (
        f"lumiphon spectrum v{__version__}",
        f"zpl_ev = {args.zpl:.9g} ; gamma_mev = {args.gamma:.9g} ; "
        f"sigma_mev = {args.sigma:.9g} ; cutoff_mev = {args.cutoff:.9g}",
        f"window_ev = {window[0]:.9g}:{window[1]:.9g} ; step_mev = {args.step:.9g} ; "
        f"omega_cubed = {str(not args.no_omega_cubed).lower()}",
        f"total_s = {hr.total:.9g}",
    )
    lio.write_spectrum_tsv(args.out, ls.energy_ev, ls.intensity, header, overwrite=True)
    if args.peaks:
        lio.write_table_tsv(
            args.peaks,
            header,
            ("rank", "mode", "omega_mev", "sk", "offset_mev", "energy_ev"),
            (
                (r, p.mode_index, hr.omegas_mev[p.mode_index], p.sk, p.offset_mev, p.energy_ev)
                for r, p in enumerate(peaks, start=1)
            ),
            overwrite=True,
        )
    _write_manifest(args, [args.hr])
    print(f"spectrum points: {ls.energy_ev.size}  labelled peaks: {len(peaks)}")
    return 0


def cmd_oracle(args) -> int:
    import numpy as np

    from . import fcoracle
    from . import io as lio
    from . import vibronic

    hr = lio.parse_hr(lio.load_document(args.hr))
    if args.sigma < 0:
        raise InputError(f"sigma must be non-negative, got {args.sigma}")
    ladder = fcoracle.enumerate_fc(hr, args.max_quanta)
    zpl_mev = args.zpl * 1000.0
    omega_max = float(ladder.omegas_mev.max()) if ladder.omegas_mev.size else 0.0
    if args.window is None:
        lo_mev, hi_mev = vibronic.default_window_mev(
            zpl_mev, omega_max, hr.total, args.gamma, max(args.sigma, 1.0)
        )
        window = (lo_mev / 1000.0, hi_mev / 1000.0)
    else:
        window = args.window
    npts = int(np.floor((window[1] - window[0]) / (args.step / 1000.0) + 1e-9)) + 1
    grid = window[0] + (args.step / 1000.0) * np.arange(npts)
    spec = fcoracle.broadened_oracle_spectrum(
        ladder, args.gamma, grid, args.zpl, args.sigma
    )
    header = (
        f"lumiphon oracle v{__version__}",
        f"zpl_ev = {args.zpl:.9g} ; gamma_mev = {args.gamma:.9g} ; "
        f"sigma_mev = {args.sigma:.9g} ; max_quanta = {args.max_quanta}",
        f"lines = {ladder.nlines} ; total_weight = {spec.total_weight:.9g} ; "
        f"tail = {spec.tail:.9g}",
    )
    lio.write_spectrum_tsv(args.out, spec.energy_ev, spec.intensity, header, overwrite=True)
    if args.sticks:
        lio.write_table_tsv(
            args.sticks,
            header,
            ("energy_ev", "weight", "quanta"),
            (
                (
                    args.zpl - e / 1000.0,
                    w,
                    ",".join(str(int(q)) for q in quanta) or "0",
                )
                for e, w, quanta in zip(
                    ladder.energies_mev, ladder.weights, ladder.quanta
                )
            ),
            overwrite=True,
        )
    print(f"lines = {ladder.nlines}  tail = {ladder.tail:.9g}")
    if args.compare:
        other_e, other_i = lio.read_spectrum_tsv(args.compare)
        if other_e.shape != spec.energy_ev.shape or not np.allclose(
            other_e, spec.energy_ev, rtol=0, atol=1e-9
        ):
            raise InputError(
                f"{args.compare} is sampled on a different grid; "
                "regenerate both spectra with the same window and step"
            )
        a = spec.intensity / np.trapezoid(spec.intensity, spec.energy_ev)
        b = other_i / np.trapezoid(other_i, other_e)
        l1 = float(np.trapezoid(np.abs(a - b), spec.energy_ev))
        print(f"l1_distance = {l1:.9g}")
    _write_manifest(args, [args.hr])
    return 0


def cmd_thermo(args) -> int:
    import numpy as np

    from . import energetics
    from . import io as lio

    host, entries = lio.parse_defect_table(lio.load_document(args.defects))
    labels = []
    for e in entries:
        if e.label not in labels:
            labels.append(e.label)
    step_ev = args.fermi_step / 1000.0
    npts = int(np.floor(host.gap_ev / step_ev + 1e-9)) + 1
    fermi = np.minimum(step_ev * np.arange(npts), host.gap_ev)
    header = (
        f"lumiphon thermo v{__version__}",
        f"gap_ev = {host.gap_ev:.9g} ; vbm_ev = {host.vbm_ev:.9g} ; "
        f"fermi_step_mev = {args.fermi_step:.9g}",
    )

    env_rows, trans_rows, window_rows, notes = [], [], [], []
    for label in labels:
        group = [e for e in entries if e.label == label]
        diagram = energetics.stability_diagram(group, host)
        values = diagram.envelope(fermi)
        env_rows.extend((label, x, v) for x, v in zip(fermi.tolist(), values.tolist()))
        for tr in diagram.transitions:
            trans_rows.append(
                (label, tr.q, tr.q2, tr.fermi_ev, host.gap_ev - tr.fermi_ev)
            )
        for charge, lo, hi in diagram.charge_windows():
            window_rows.append((label, charge, lo, hi))
        if len(group) >= 3:
            for row in energetics.charge_ordering_report(group, host):
                if row.negative_u:
                    notes.append(
                        f"negative_u {label} {row.q_high}/{row.q_mid}/{row.q_low} "
                        f"eps({row.q_high}/{row.q_mid}) = {row.eps_high_mid_ev:.9g} >= "
                        f"eps({row.q_mid}/{row.q_low}) = {row.eps_mid_low_ev:.9g}"
                    )
    lio.write_table_tsv(
        args.envelope, header, ("label", "fermi_ev", "formation_ev"), env_rows,
        overwrite=True,
    )
    lio.write_table_tsv(
        args.transitions,
        header,
        ("label", "q_from", "q_to", "fermi_ev_above_vbm", "fermi_ev_below_cbm"),
        trans_rows,
        overwrite=True,
    )
    if args.windows:
        lio.write_table_tsv(
            args.windows,
            header,
            ("label", "charge", "fermi_lo_ev", "fermi_hi_ev"),
            window_rows,
            overwrite=True,
        )
    for note in notes:
        print(note)
    print(f"labels: {len(labels)}  transitions: {len(trans_rows)}")
    _write_manifest(args, [args.defects])
    return 0


def cmd_dissoc(args) -> int:
    from . import energetics
    from . import io as lio

    rows = lio.parse_dissociation_table(lio.load_document(args.energies))
    out_rows = []
    unstable = 0
    for row in rows:
        ed = energetics.dissociation_energy(
            row["fragment_energy_ev"],
            row["released_energy_ev"],
            row["cluster_energy_ev"],
        )
        unstable += 0 if ed.stable else 1
        out_rows.append((row["label"], ed.value_ev, ed.stable))
    lio.write_table_tsv(
        args.out,
        (f"lumiphon dissoc v{__version__}",),
        ("label", "e_d_ev", "stable"),
        out_rows,
        overwrite=True,
    )
    print(f"entries: {len(out_rows)}  unstable: {unstable}")
    _write_manifest(args, [args.energies])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_line = " ".join(argv if argv is not None else sys.argv[1:])
    _pin_threads(max(1, args.threads))
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except LumiphonError as exc:  # unlisted family, treat as input trouble
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
