"""
Handlers of the analysis commands: entropy, rate, exposed, verify, represent.

Each handler takes the effective RunConfig, writes its files through a
ResultStore and returns (exit code, summary) for the command line.
"""
import logging
from typing import Any, Dict, List, Tuple

from ldlab.error_handlers import ExitCodes, UsageError2
from ldlab.models import RunConfig
from ldlab.services.catalog import model_from_id
from ldlab.services.conjugate import (
    TestingFamily,
    conjugate_rate,
    detect_exposed,
    family_entropies,
    family_from_spec,
    member_entropy,
)
from ldlab.services.entropy import EntropyModel, asymptotic_entropy, check_representation
from ldlab.services.extgrid import GridFunction
from ldlab.services.storage import ResultStore
from ldlab.services.verify import default_function_battery, gartner_ellis_pipeline
from ldlab.validation import parse_function, parse_grid

logger = logging.getLogger(__name__)

CommandResult = Tuple[int, Dict[str, Any]]


def build_model(config: RunConfig) -> EntropyModel:
    space = parse_grid(config.grid) if config.grid else None
    model = model_from_id(config.model, space, config.n_ladder, config.tail_window)
    logger.info(f"Model {model!r} on {model.space.size} grid points")
    return model


def build_family(config: RunConfig, model: EntropyModel, required: bool = True) -> TestingFamily:
    if not config.family:
        if required:
            raise UsageError2("This command needs --family")
        return None
    return family_from_spec(config.family, model.space)


def build_functions(config: RunConfig, model: EntropyModel) -> List[Tuple[str, GridFunction]]:
    return [parse_function(spec, model.space, i) for i, spec in enumerate(config.functions)]


def cmd_entropy(config: RunConfig, store: ResultStore) -> CommandResult:
    """Entropy sweeps over the ladder and their tail-window asymptotics"""
    model = build_model(config)
    family = build_family(config, model, required=False)
    functions = build_functions(config, model)
    if family is None and not functions:
        raise UsageError2("entropy needs --family or at least one --f")

    records = []
    if family is not None:
        if config.entropy_source == "analytic":
            records.extend(member_entropy(model, family, i, "analytic", config.tolerance)
                           for i in range(family.size))
        else:
            records.extend(asymptotic_entropy(model, family.member(model.space, i), config.tolerance,
                                              label=family.describe(i))
                           for i in range(family.size))
    for label, f in functions:
        records.append(asymptotic_entropy(model, f, config.tolerance, label=label))

    sweep_path, table_path = store.export_entropy_tables("entropy_sweep.csv", "entropy_asymptotic.csv", records)
    json_path = store.export_json("entropy.json", {
        "records": [r.model_dump(mode="json") for r in records],
        "provenance": config.provenance(),
    })
    return ExitCodes.CERTIFIED, {
        "functions": len(records),
        "converged": sum(r.converged for r in records),
        "files": [str(sweep_path), str(table_path), str(json_path)],
    }


def cmd_rate(config: RunConfig, store: ResultStore) -> CommandResult:
    """Conjugate rate of the model over the testing family"""
    model = build_model(config)
    family = build_family(config, model)
    rate = conjugate_rate(model, family, config.entropy_source, config.tolerance)
    csv_path = store.export_rate("rate.csv", rate)
    json_path = store.export_json("rate.json", {"diagnostics": rate.diagnostics, "provenance": config.provenance()})
    return ExitCodes.CERTIFIED, {"points": model.space.size, "diagnostics": rate.diagnostics,
                                 "files": [str(csv_path), str(json_path)]}


def cmd_exposed(config: RunConfig, store: ResultStore) -> CommandResult:
    """Exposed grid points of the conjugate rate"""
    model = build_model(config)
    family = build_family(config, model)
    entropies = family_entropies(model, family, config.entropy_source, config.tolerance)
    rate = conjugate_rate(model, family, config.entropy_source, config.tolerance, entropies)
    exposed = detect_exposed(model, family, rate, config.margin, config.radius, config.entropy_source,
                             config.tolerance, entropies)
    csv_path = store.export_exposed("exposed.csv", exposed)
    json_path = store.export_json("exposed.json", {
        "count": exposed.count,
        "nice": int(exposed.nice.sum()),
        "label": exposed.label,
        "points": exposed.exposed_points().tolist(),
        "diagnostics": exposed.diagnostics,
        "provenance": config.provenance(),
    })
    return ExitCodes.CERTIFIED, {"exposed": exposed.count, "files": [str(csv_path), str(json_path)]}


def cmd_verify(config: RunConfig, store: ResultStore) -> CommandResult:
    """Full pipeline; exit 0 only for a certified LDP and LP"""
    model = build_model(config)
    family = build_family(config, model)
    functions = build_functions(config, model) or None
    report, rate, exposed = gartner_ellis_pipeline(model, family, config, functions=functions)
    paths = [
        store.export_json("verify.json", report),
        store.export_rate("rate.csv", rate),
        store.export_exposed("exposed.csv", exposed),
    ]
    certified = bool(report.summary.certified)
    if not certified:
        logger.warning(f"LDP for {model.model_id} with {family.label} is not certified")
    code = ExitCodes.CERTIFIED if certified else ExitCodes.VIOLATION
    return code, {"summary": report.summary.model_dump(mode="json"), "files": [str(p) for p in paths]}


def cmd_represent(config: RunConfig, store: ResultStore) -> CommandResult:
    """Entropy against the convex integral of the upper capacity concentration"""
    model = build_model(config)
    functions = build_functions(config, model)
    if not functions:
        functions = default_function_battery(model.space, config.seed)
    reports = []
    for label, f in functions:
        report = check_representation(model, f, config.tolerance)
        reports.append({"function": label, **report.model_dump(mode="json", by_alias=True)})
    passed = all(r["pass"] for r in reports)
    path = store.export_json("represent.json", {"checks": reports, "pass": passed,
                                                "provenance": config.provenance()})
    return (ExitCodes.CERTIFIED if passed else ExitCodes.VIOLATION), {
        "functions": len(reports), "pass": passed, "files": [str(path)]}


COMMANDS = {
    "entropy": cmd_entropy,
    "rate": cmd_rate,
    "exposed": cmd_exposed,
    "verify": cmd_verify,
    "represent": cmd_represent,
}
