"""Flat key-value configuration files.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Values are typed as bool (true/false), int, float or string, in that
order of preference; serialization round-trips exactly for those types.
"""


def parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            cfg[key.strip()] = parse_scalar(value)
    return cfg


def save_config(path, cfg: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {format_scalar(cfg[key])}\n")


def parse_override(text: str):
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, _, value = text.partition("=")
    return key.strip(), parse_scalar(value)


def resolve(defaults: dict, file_cfg: dict | None = None, overrides=None) -> dict:
    """Merge defaults <- config file <- overrides; unknown keys are rejected."""
    cfg = dict(defaults)
    for source in (file_cfg or {},):
        for key, value in source.items():
            if key not in cfg:
                raise ValueError(f"unknown config key {key!r}")
            cfg[key] = value
    for text in overrides or []:
        key, value = parse_override(text)
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
        cfg[key] = value
    return cfg
