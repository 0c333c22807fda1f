"""Run manifests: everything needed to replay a command, stored next to its output."""

from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from pydantic import BaseModel, ConfigDict, Field

from core.utils.file_utils import save_json, sha256_file

MANIFEST_VERSION = 1


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    manifest_version: int = MANIFEST_VERSION
    command: str
    config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    artifact_hashes: Dict[str, str] = Field(default_factory=dict)


def manifest_path_for(output_path: Path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")


def hash_artifacts(paths: Iterable[Path]) -> Dict[str, str]:
    """sha256 of every existing file, keyed by its path as given."""
    return {str(path): sha256_file(Path(path)) for path in paths if Path(path).is_file()}


def write_manifest(
    command: str,
    output_path: Path,
    config: Dict[str, Any],
    inputs: Dict[str, Any],
    outputs: Dict[str, Path],
    seed: Optional[int] = None,
) -> Path:
    """Write `<output_path>.manifest.json`; contains no timestamps, so reruns are byte-identical."""
    input_paths = {name: str(value) for name, value in inputs.items()}
    output_paths = {name: str(value) for name, value in outputs.items()}
    manifest = RunManifest(
        command=command,
        config=config,
        inputs=input_paths,
        outputs=output_paths,
        seed=seed,
        artifact_hashes=hash_artifacts(
            [*map(Path, input_paths.values()), *map(Path, output_paths.values())]
        ),
    )
    path = manifest_path_for(output_path)
    save_json(manifest.model_dump(mode="json"), path)
    return path
