from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import ConfigError, StencilError

BoundaryLabel = Literal["Gamma0", "GammaT"]
Edge2 = Literal["west", "east", "south", "north"]
Face3 = Literal["west", "east", "south", "north", "bottom", "top"]

EDGES_2D: Tuple[str, ...] = ("west", "east", "south", "north")
FACES_3D: Tuple[str, ...] = ("west", "east", "south", "north", "bottom", "top")

# Smallest node count per axis supported by the one-sided four-point stencils
MIN_NODES = 5


def _check_partition(partition: Dict[str, str], names: Tuple[str, ...]) -> None:
    missing = [name for name in names if name not in partition]
    if missing:
        raise ConfigError(f"every boundary part needs a label, missing {missing}", "grid.partition")
    if "Gamma0" not in partition.values():
        raise ConfigError("Gamma0 must be nonempty", "grid.partition")


class Grid2(BaseModel):
    """Uniform rectangular node grid on [0, lx] x [0, ly] with an edge-wise Gamma0/GammaT split"""

    model_config = ConfigDict(frozen=True)

    nx: int = Field(..., description="Node count along x")
    ny: int = Field(..., description="Node count along y")
    lx: float = Field(1.0, gt=0, description="Side length along x")
    ly: float = Field(1.0, gt=0, description="Side length along y")
    partition: Dict[Edge2, BoundaryLabel] = Field(
        default_factory=lambda: {edge: "Gamma0" for edge in EDGES_2D},
        description="Boundary label per edge",
    )

    @model_validator(mode="after")
    def _validate(self) -> "Grid2":
        if self.nx < MIN_NODES or self.ny < MIN_NODES:
            raise StencilError(f"grid {self.nx}x{self.ny} is below the {MIN_NODES}-node stencil width")
        _check_partition(self.partition, EDGES_2D)
        return self

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def key(self) -> tuple:
        return ("grid2", self.nx, self.ny, self.lx, self.ly, tuple(sorted(self.partition.items())))

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Nodal coordinate arrays X, Y of shape (nx, ny)"""
        x = np.linspace(0.0, self.lx, self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def edges_with(self, label: str) -> List[str]:
        return [edge for edge in EDGES_2D if self.partition[edge] == label]

    def edge_mask(self, edge: str) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if edge == "west":
            mask[0, :] = True
        elif edge == "east":
            mask[-1, :] = True
        elif edge == "south":
            mask[:, 0] = True
        elif edge == "north":
            mask[:, -1] = True
        else:
            raise ConfigError(f"unknown edge '{edge}'", "grid.partition")
        return mask

    def edge_layer_mask(self, edge: str) -> np.ndarray:
        """First interior node layer parallel to an edge"""
        mask = np.zeros(self.shape, dtype=bool)
        if edge == "west":
            mask[1, :] = True
        elif edge == "east":
            mask[-2, :] = True
        elif edge == "south":
            mask[:, 1] = True
        elif edge == "north":
            mask[:, -2] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = False
        return mask

    def gamma0_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for edge in self.edges_with("Gamma0"):
            mask |= self.edge_mask(edge)
        return mask

    def node_labels(self) -> np.ndarray:
        """Per-node label; Gamma0 wins at corners shared with a GammaT edge"""
        labels = np.full(self.shape, "interior", dtype=object)
        labels[self.boundary_mask()] = "GammaT"
        labels[self.gamma0_mask()] = "Gamma0"
        return labels


class Grid3(BaseModel):
    """Uniform box grid on [0, lx] x [0, ly] x [0, lz] with a face-wise Gamma0/GammaT split"""

    model_config = ConfigDict(frozen=True)

    nx: int = Field(..., description="Node count along x")
    ny: int = Field(..., description="Node count along y")
    nz: int = Field(..., description="Node count along z")
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    lz: float = Field(1.0, gt=0)
    partition: Dict[Face3, BoundaryLabel] = Field(
        default_factory=lambda: {face: "Gamma0" for face in FACES_3D},
        description="Boundary label per face",
    )

    @model_validator(mode="after")
    def _validate(self) -> "Grid3":
        if min(self.nx, self.ny, self.nz) < MIN_NODES:
            raise StencilError(
                f"grid {self.nx}x{self.ny}x{self.nz} is below the {MIN_NODES}-node stencil width"
            )
        _check_partition(self.partition, FACES_3D)
        return self

    @property
    def spacings(self) -> Tuple[float, float, float]:
        return (self.lx / (self.nx - 1), self.ly / (self.ny - 1), self.lz / (self.nz - 1))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny * self.nz

    def key(self) -> tuple:
        return ("grid3", self.nx, self.ny, self.nz, self.lx, self.ly, self.lz,
                tuple(sorted(self.partition.items())))

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.linspace(0.0, self.lx, self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        z = np.linspace(0.0, self.lz, self.nz)
        return np.meshgrid(x, y, z, indexing="ij")

    def faces_with(self, label: str) -> List[str]:
        return [face for face in FACES_3D if self.partition[face] == label]

    def face_mask(self, face: str) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        index = {
            "west": (0, slice(None), slice(None)),
            "east": (-1, slice(None), slice(None)),
            "south": (slice(None), 0, slice(None)),
            "north": (slice(None), -1, slice(None)),
            "bottom": (slice(None), slice(None), 0),
            "top": (slice(None), slice(None), -1),
        }
        if face not in index:
            raise ConfigError(f"unknown face '{face}'", "grid.partition")
        mask[index[face]] = True
        return mask

    def gamma0_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for face in self.faces_with("Gamma0"):
            mask |= self.face_mask(face)
        return mask

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = False
        return mask
