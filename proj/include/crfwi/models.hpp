#pragma once

#include <cstddef>
#include <cstdint>

#include "crfwi/model_core.hpp"

namespace crfwi {

/// Two-layer depth profile: v_top above `interface_cell`, v_bottom from it down.
VelocityGrid layered_1d(std::size_t nz, double dz, double v_top, double v_bottom,
                        std::size_t interface_cell);

VelocityGrid two_layer_2d(std::size_t nz, std::size_t nx, double h, double v_top,
                          double v_bottom, std::size_t interface_cell);

/// Procedural stand-in for the Marmousi section: a water layer over folded,
/// faulted sediments with a velocity gradient, a high-velocity wedge and a
/// low-velocity lens. Deterministic; default 94 x 288 cells at 15 m.
VelocityGrid marmousi_like(std::size_t nz = 94, std::size_t nx = 288, double h = 15.0);

/// Procedural salt section: layered sediments on a depth gradient with a
/// 4500 m/s salt body whose top is a smooth dome. Default 75 x 250 at 10 m.
VelocityGrid salt_like(std::size_t nz = 75, std::size_t nx = 250, double h = 10.0);

/// Single column of `marmousi_like` as a 1D profile.
VelocityGrid marmousi_trace(std::size_t column = 144);

/// 47 x 72 section at 30 m: the procedural section averaged 2 x 2 and cropped
/// to the lateral window starting at column 36 of the decimated model.
VelocityGrid marmousi_crop();

/// Separable Gaussian smoothing with standard deviation `sigma_cells`,
/// edge-replicating; used for smooth starting models.
VelocityGrid gaussian_smooth(const VelocityGrid& grid, double sigma_cells);

/// Linear-in-depth model from v_top at row 0 to v_bottom at the last row.
VelocityGrid linear_gradient(const VelocityGrid& shape, double v_top, double v_bottom);

/// Edge-replicating halo of `width` cells on the absorbing sides. With a free
/// surface the top is not padded. 1D grids are padded along depth only.
struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;
};

Padding halo_padding(const VelocityGrid& grid, std::size_t width, Boundary boundary);
VelocityGrid pad_model(const VelocityGrid& grid, const Padding& pad);
VelocityGrid crop_model(const VelocityGrid& padded, const Padding& pad);

/// Sources every `shot_spacing` cells and receivers every `receiver_spacing`
/// cells along row `row`, inside the lateral window [first, last].
AcquisitionGeometry surface_geometry(std::size_t first, std::size_t last, std::size_t row,
                                     std::size_t n_shots, std::size_t shot_spacing,
                                     std::size_t receiver_spacing, Boundary boundary);

}  // namespace crfwi
