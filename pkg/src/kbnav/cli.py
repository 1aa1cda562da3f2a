"""Batch command-line surface.

Subcommands: bank {synth, validate}, retrieve, augment, simulate,
evaluate, gradcheck, bench. Exit codes: 0 success, 1 validation or
metric failure, 2 malformed input. Diagnostics go to stderr; machine
output goes to files (atomic write) or stdout as JSON. All randomness
flows from --seed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InternalConsistency, KbnavError
from .feature_bank import load_bank, save_bank, synth_bank, validate_bank
from .fusion_math import gate_bundle, grad_check, mha_bundle
from .goal_aware import gaa_bundle, gaa_forward, load_instruction
from .knowledge_aug import KnowledgeContext, ka_bundle, ka_forward_trace
from .metrics import EpisodeGoal, evaluate
from .nav_sim import (
    EpisodeConfig,
    KnowledgeBanks,
    PlantSpec,
    load_env,
    plant_env,
    run_episode,
    trajectory_from_json,
)
from .params import (
    load_pipeline_params,
    neutral_pipeline_params,
    random_pipeline_params,
)
from .retrieval import index_image_knowledge, retrieve_view_knowledge
from .tensor_store import atomic_write, save_tensors


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not hasattr(args, "handler"):
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.handler(args)
    except InternalConsistency as exc:
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return 1
    except KbnavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbnav")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    bank = sub.add_parser("bank", help="feature bank management")
    bank_sub = bank.add_subparsers(dest="bank_command")

    synth = bank_sub.add_parser("synth", help="write a seeded synthetic bank")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--count", type=int, required=True)
    synth.add_argument("--dim", type=int, required=True)
    synth.add_argument("--modality", choices=("text", "image", "view"), default="text")
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=_cmd_bank_synth)

    validate = bank_sub.add_parser("validate", help="check a bank file's invariants")
    validate.add_argument("path")
    validate.set_defaults(handler=_cmd_bank_validate)

    retrieve = sub.add_parser("retrieve", help="per-view textual knowledge retrieval")
    retrieve.add_argument("--env", required=True)
    retrieve.add_argument("--text-bank", required=True)
    retrieve.add_argument("--k", type=int, default=5)
    retrieve.add_argument("--nodes", help="comma-separated node ids (default: all)")
    retrieve.add_argument("--out", required=True)
    retrieve.set_defaults(handler=_cmd_retrieve)

    augment = sub.add_parser("augment", help="emit augmentation trace tensors")
    augment.add_argument("--instr", required=True)
    augment.add_argument("--image-bank", required=True)
    augment.add_argument("--params")
    augment.add_argument("--seed", type=int, default=0)
    augment.add_argument("--out", required=True)
    augment.set_defaults(handler=_cmd_augment)

    simulate = sub.add_parser("simulate", help="run navigation episodes")
    simulate.add_argument("--env", help="environment JSON; omit for planted mode")
    simulate.add_argument("--instr", help="instruction record JSON (file mode)")
    simulate.add_argument("--text-bank")
    simulate.add_argument("--image-bank")
    simulate.add_argument("--params")
    simulate.add_argument("--start", help="start node id (file mode)")
    simulate.add_argument("--k", type=int, default=5)
    simulate.add_argument("--lambda", dest="lam", type=float, default=0.5)
    simulate.add_argument("--max-steps", type=int, default=15)
    simulate.add_argument("--stop-bias", type=float, default=0.0)
    simulate.add_argument("--episodes", type=int, default=1)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--workers", type=int, default=1)
    simulate.add_argument("--knowledge", choices=("on", "off", "text-only", "image-only"),
                          default="on")
    simulate.add_argument("--plant-nodes", type=int, default=30)
    simulate.add_argument("--branching", type=int, default=3)
    simulate.add_argument("--dim", type=int, default=48)
    simulate.add_argument("--alpha", type=float, default=0.9)
    simulate.add_argument("--goals-out", help="write planted episode goals JSON here")
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(handler=_cmd_simulate)

    ev = sub.add_parser("evaluate", help="compute the metric suite over trajectories")
    ev.add_argument("--env", required=True)
    ev.add_argument("--traj", required=True)
    ev.add_argument("--goals", required=True)
    ev.add_argument("--radius", type=float, default=3.0)
    ev.add_argument("--csv", help="also write a CSV summary here")
    ev.add_argument("--out")
    ev.set_defaults(handler=_cmd_evaluate)

    grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    grad.add_argument("--module", choices=("mha", "gate", "gaa", "ka", "all"),
                      default="all")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tol", type=float, default=1e-4)
    grad.add_argument("--points", type=int, default=10)
    grad.set_defaults(handler=_cmd_gradcheck)

    bench = sub.add_parser("bench", help="wall-clock micro-benchmark (informational)")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--count", type=int, default=10000)
    bench.add_argument("--dim", type=int, default=64)
    bench.add_argument("--queries", type=int, default=100)
    bench.set_defaults(handler=_cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def _cmd_bank_synth(args: argparse.Namespace) -> int:
    bank = synth_bank(args.seed, args.count, args.dim, args.modality)
    save_bank(bank, args.out)
    print(json.dumps({"written": args.out, "count": bank.manifest.count,
                      "dim": bank.manifest.dim}))
    return 0


def _cmd_bank_validate(args: argparse.Namespace) -> int:
    bank = load_bank(args.path)
    report = validate_bank(bank)
    print(json.dumps(report.to_json_obj(), indent=2))
    return 0 if report.ok else 1


def _cmd_retrieve(args: argparse.Namespace) -> int:
    env = load_env(args.env)
    bank = load_bank(args.text_bank)
    node_ids = args.nodes.split(",") if args.nodes else sorted(env.nodes)
    lines = []
    for nid in node_ids:
        if nid not in env.nodes:
            raise KbnavError(f"unknown node {nid!r}")
        node = env.nodes[nid]
        vk = retrieve_view_knowledge(list(node.view_matrix), bank, k=args.k, node_id=nid)
        lines.append(vk.to_json_line())
    atomic_write(Path(args.out), ("\n".join(lines) + "\n").encode("utf-8"))
    print(json.dumps({"written": args.out, "nodes": len(node_ids)}))
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    instr = load_instruction(args.instr)
    image_bank = load_bank(args.image_bank)
    instr_dim = instr.features.shape[1]
    if args.params:
        params = load_pipeline_params(args.params)
    else:
        params = random_pipeline_params(args.seed, dim=instr_dim, instr_dim=instr_dim,
                                        image_dim=image_bank.manifest.dim)
    fused, gate, attended = gaa_forward(instr.features, instr.subgoal_matrix, params.gaa)
    k_rows = index_image_knowledge(instr.id, instr.subgoal_bank_ids(), image_bank)
    trace = ka_forward_trace(KnowledgeContext(k_rows, fused), params.ka_instruction)
    tensors = {"t": instr.features, "t_attended": attended, "t_gate": gate,
               "t_enhanced": fused}
    tensors.update({f"ka.{k}": v for k, v in trace.named_tensors().items()})
    save_tensors(args.out, tensors, meta={"instruction_id": instr.id})
    print(json.dumps({"written": args.out, "tensors": sorted(tensors)}))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.env:
        return _simulate_files(args)
    return _simulate_planted(args)


def _simulate_files(args: argparse.Namespace) -> int:
    env = load_env(args.env)
    if not args.instr:
        raise KbnavError("--instr is required when --env is given")
    instr = load_instruction(args.instr)
    banks = KnowledgeBanks(
        text=load_bank(args.text_bank) if args.text_bank else None,
        image=load_bank(args.image_bank) if args.image_bank else None,
    )
    if args.params:
        params = load_pipeline_params(args.params)
    else:
        params = neutral_pipeline_params(env.view_dim)
    start = args.start or sorted(env.nodes)[0]
    cfg = EpisodeConfig(start_node=start, max_steps=args.max_steps, lam=args.lam,
                        stop_bias=args.stop_bias, seed=args.seed, k=args.k,
                        knowledge=args.knowledge)
    traj = run_episode(env, instr, banks, params, cfg)
    atomic_write(Path(args.out), (traj.to_json_line() + "\n").encode("utf-8"))
    print(json.dumps({"written": args.out, "episodes": 1}))
    return 0


def _simulate_planted(args: argparse.Namespace) -> int:
    spec = PlantSpec(num_nodes=args.plant_nodes, branching=args.branching,
                     dim=args.dim, alpha=args.alpha)
    if args.params:
        params = load_pipeline_params(args.params)
    else:
        params = neutral_pipeline_params(spec.dim)

    def one(i: int):
        ep = plant_env(args.seed + i, spec)
        cfg = EpisodeConfig(start_node=ep.start_node, max_steps=args.max_steps,
                            lam=args.lam, stop_bias=args.stop_bias, seed=args.seed + i,
                            k=args.k, knowledge=args.knowledge)
        banks = KnowledgeBanks(text=ep.text_bank, image=ep.image_bank)
        traj = run_episode(ep.env, ep.instruction, banks, params, cfg)
        goal = {
            "instruction_id": ep.instruction.id,
            "goal_position": [float(x) for x in ep.goal_position],
            "goal_object": ep.goal_object_id,
            "shortest_length": ep.shortest_length,
            "goal_node": ep.goal_node,
            "success": bool(np.linalg.norm(
                ep.env.nodes[traj.path[-1]].position - ep.goal_position) <= 3.0),
        }
        return traj, goal

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(one, range(args.episodes)))
    else:
        results = [one(i) for i in range(args.episodes)]

    lines = "".join(traj.to_json_line() + "\n" for traj, _ in results)
    atomic_write(Path(args.out), lines.encode("utf-8"))
    if args.goals_out:
        goals = {"goals": [g for _, g in results]}
        atomic_write(Path(args.goals_out),
                     json.dumps(goals, indent=2).encode("utf-8"))
    n_success = sum(1 for _, g in results if g["success"])
    print(json.dumps({"written": args.out, "episodes": args.episodes,
                      "success_rate": n_success / max(1, args.episodes)}))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    env = load_env(args.env)
    lines = Path(args.traj).read_text(encoding="utf-8").splitlines()
    trajectories = [trajectory_from_json(line) for line in lines if line.strip()]
    gobj = json.loads(Path(args.goals).read_text(encoding="utf-8"))
    goals = {
        g["instruction_id"]: EpisodeGoal(
            instruction_id=g["instruction_id"],
            goal_position=np.asarray(g["goal_position"], dtype=np.float64),
            goal_object=g.get("goal_object"),
            shortest_length=float(g["shortest_length"]),
        )
        for g in gobj["goals"]
    }
    report = evaluate(trajectories, env, goals, radius=args.radius)
    out_json = report.to_json()
    if args.out:
        atomic_write(Path(args.out), out_json.encode("utf-8"))
    else:
        print(out_json)
    if args.csv:
        atomic_write(Path(args.csv), report.to_csv().encode("utf-8"))
    return 0


_GRAD_BUNDLES = {
    "mha": lambda seed: mha_bundle(seed),
    "gate": lambda seed: gate_bundle(seed),
    "gaa": lambda seed: gaa_bundle(seed),
    "ka": lambda seed: ka_bundle(seed),
}


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    modules = list(_GRAD_BUNDLES) if args.module == "all" else [args.module]
    ok = True
    for name in modules:
        for i in range(args.points):
            point, forward, backward = _GRAD_BUNDLES[name](args.seed + i)
            report = grad_check(forward, backward, point, tol=args.tol)
            print(json.dumps({"module": name, "seed": args.seed + i,
                              **report.to_json_obj()}))
            ok = ok and report.passed
    return 0 if ok else 1


def _cmd_bench(args: argparse.Namespace) -> int:
    from .retrieval import cosine_topk

    bank = synth_bank(args.seed, args.count, args.dim, "text")
    rng = np.random.default_rng(args.seed)
    queries = rng.standard_normal((args.queries, args.dim))
    t0 = time.perf_counter()
    for q in queries:
        cosine_topk(q, bank, 5)
    t_retrieval = time.perf_counter() - t0

    point, forward, _ = ka_bundle(args.seed, p=180, n=36, dim=args.dim, heads=2)
    t0 = time.perf_counter()
    for _ in range(10):
        forward(point)
    t_ka = time.perf_counter() - t0

    print(json.dumps({
        "retrieval_queries": args.queries,
        "retrieval_bank_rows": args.count,
        "retrieval_total_s": t_retrieval,
        "retrieval_per_query_ms": 1000.0 * t_retrieval / max(1, args.queries),
        "ka_forward_calls": 10,
        "ka_forward_per_call_ms": 100.0 * t_ka,
    }))
    return 0


if __name__ == "__main__":
    main()
