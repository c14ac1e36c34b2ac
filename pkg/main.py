"""
Command-line entry point for DIRECT PYTHON EXECUTION.

    python main.py run scenarios/warehouse.cfg --trials 60 --duration 1000
    python main.py sweep scenarios/desk-sweep.cfg --workers 4
    python main.py golden temperature-alert --seed 3
    python main.py validate scenarios/registration.cfg

The experiment workflow is compiled WITH the in-memory checkpointer and
invoked with a thread ID in the config (see graphs/experiment_system.py
for the Studio variant without a checkpointer).
"""
import argparse
import os
import sys

from dotenv import load_dotenv
from langchain_core.messages import HumanMessage

from graphs.experiment_system import create_experiment_workflow
from utils.checkpointer import get_memory_saver, thread_config
from utils.logs import configure_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemnet", description="Chemical warehouse WSN simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, help="override [scenario] seed")
        p.add_argument("--out", help="output root (default $CHEMNET_OUT or ./out)")

    run = sub.add_parser("run", help="run the trials of one scenario")
    run.add_argument("target", metavar="cfg")
    sweep = sub.add_parser("sweep", help="density x profile x protocol comparison")
    sweep.add_argument("target", metavar="cfg")
    for p in (run, sweep):
        common(p)
        p.add_argument("--trials", type=int)
        p.add_argument("--duration", type=float)
        p.add_argument("--protocol", choices=["ours", "rrr"])
        p.add_argument("--workers", type=int, default=1, help="parallel trial processes")

    golden = sub.add_parser("golden", help="check a scripted scenario against its expected events")
    golden.add_argument("target", metavar="name")
    common(golden)

    validate = sub.add_parser("validate", help="parse and validate a scenario file")
    validate.add_argument("target", metavar="cfg")
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    options = {
        key: getattr(args, key)
        for key in ("seed", "trials", "duration", "protocol", "workers")
        if getattr(args, key, None) is not None
    }
    out_dir = getattr(args, "out", None) or os.getenv("CHEMNET_OUT") or "out"

    graph = create_experiment_workflow().compile(checkpointer=get_memory_saver())
    result = graph.invoke(
        {
            "messages": [HumanMessage(content=" ".join(argv if argv is not None else sys.argv[1:]))],
            "command": args.command,
            "target": args.target,
            "options": options,
            "out_dir": out_dir,
            "exit_code": 0,
        },
        config=thread_config(),
    )

    for message in result["messages"][1:]:
        if not message.content.startswith("Routing to:"):
            print(message.content)
    if result.get("summary"):
        print(result["summary"])
    return int(result.get("exit_code", 0))


if __name__ == "__main__":
    sys.exit(main())
