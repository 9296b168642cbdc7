from typing import Any, Optional
import json
import math
import dataclasses

import numpy as np


HEADER_KEY = "__header__"


def json_serialize(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, (set, frozenset)):
        return sorted(obj)
    else:
        raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys and no whitespace, so that equal objects
    give equal bytes.

    """
    return json.dumps(obj, default=json_serialize, sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False)


def dump_json(obj, file) -> None:
    json.dump(obj, file, default=json_serialize, sort_keys=True, indent=2,
              ensure_ascii=False)


def make_header(command: str, config: Any, extra: Optional[dict] = None) -> dict:
    """Header object which begins every output file.

    Args:
        command: The subcommand or function that produced the file
        config: The resolved config (or a dict of resolved options)
        extra: Anything else that should be recorded

    """
    from . import __version__
    header = {"tool": "trackkit", "version": __version__, "command": command,
              "config": json.loads(dumps_json(config))}
    if extra:
        header.update(extra)
    return {HEADER_KEY: header}


def is_header(obj) -> bool:
    return isinstance(obj, dict) and HEADER_KEY in obj


def round_floats(x: float, digits: int = 12) -> float:
    """Round for output so that the last bits of float arithmetic don't make
    files differ across platforms.

    """
    if math.isinf(x) or math.isnan(x):
        return x
    return round(x, digits)
