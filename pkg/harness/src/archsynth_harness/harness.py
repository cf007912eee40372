"""Instantiation smoke test for compiled model configurations.

Loads a YAML emitted by the compiler into the reference framework
(ultralytics, pinned in framework.lock), builds the model, and reports
the framework's own parameter count. All failures are reported in-band;
the harness never raises on a bad config and never modifies its inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml


def framework_available() -> bool:
    try:
        import ultralytics  # noqa: F401
    except ImportError:
        return False
    return True


def instantiate_and_count(yaml_path: str | Path) -> dict:
    """Build the model described by yaml_path in the reference framework.

    Returns {"built": bool, "framework_param_count": int | None,
    "error_text": str | None}. Read-only over the input file.
    """
    yaml_path = Path(yaml_path)
    try:
        config = yaml.safe_load(yaml_path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        return {"built": False, "framework_param_count": None, "error_text": str(exc)}
    if not isinstance(config, dict) or "backbone" not in config or "head" not in config:
        return {
            "built": False,
            "framework_param_count": None,
            "error_text": "config must be a mapping with backbone and head sections",
        }

    try:
        from ultralytics.nn.tasks import DetectionModel
    except ImportError as exc:
        return {
            "built": False,
            "framework_param_count": None,
            "error_text": f"reference framework unavailable: {exc}",
        }

    try:
        model = DetectionModel(cfg=dict(config), ch=3, verbose=False)
        count = sum(p.numel() for p in model.parameters())
    except Exception as exc:  # noqa: BLE001 - report in-band, never crash
        return {"built": False, "framework_param_count": None, "error_text": str(exc)}
    return {"built": True, "framework_param_count": int(count), "error_text": None}


def cross_check(yaml_path: str | Path, validator_estimate: int | None) -> dict:
    """Instantiation result plus the param-count comparison artifact."""
    result = instantiate_and_count(yaml_path)
    report = {
        "yaml_path": str(yaml_path),
        **result,
        "validator_estimate": validator_estimate,
        "relative_difference": None,
    }
    if result["built"] and validator_estimate:
        framework_count = result["framework_param_count"]
        report["relative_difference"] = abs(framework_count - validator_estimate) / max(
            framework_count, validator_estimate
        )
    return report


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Instantiate a compiled model YAML in the reference framework."
    )
    parser.add_argument("yaml_path")
    parser.add_argument(
        "--estimate", type=int, default=None,
        help="Validator parameter estimate to cross-check against.",
    )
    parser.add_argument(
        "--out", default=None, help="Result file path (default: <yaml>.result.json)."
    )
    args = parser.parse_args(argv)

    report = cross_check(args.yaml_path, args.estimate)
    out = Path(args.out) if args.out else Path(args.yaml_path).with_suffix(".result.json")
    out.write_text(json.dumps(report, indent=2) + "\n")
    print(f"built={report['built']} params={report['framework_param_count']} -> {out}")
    return 0 if report["built"] else 1


if __name__ == "__main__":
    sys.exit(main())
