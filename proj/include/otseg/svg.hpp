#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>

#include "otseg/errors.hpp"
#include "otseg/io.hpp"

namespace otseg {

namespace detail {

inline const char* label_color(int label) {
  static const char* palette[] = {"#3b6fb6", "#c23b3b", "#3ba05f", "#b68f3b",
                                  "#7d4fb3", "#48a9b5", "#b35c8e", "#6d7f3a"};
  constexpr int n = static_cast<int>(sizeof(palette) / sizeof(palette[0]));
  return palette[((label % n) + n) % n];
}

} // namespace detail

// Scatter of the first two coordinates (1-D data sits on a horizontal line), one dot
// per point, filled by cluster label.
inline void write_scatter_svg(const std::string& path, const Eigen::MatrixXd& points,
                              const Eigen::ArrayXi& labels) {
  if (points.rows() == 0 || points.cols() == 0)
    throw Error(errc::empty_input, "nothing to draw");
  if (labels.size() != points.rows())
    throw Error(errc::dimension_mismatch, "one label per point required");

  const int width = 640, height = 480, margin = 40;
  const Eigen::Index n = points.rows();
  const bool flat = points.cols() < 2;
  const double xmin = points.col(0).minCoeff(), xmax = points.col(0).maxCoeff();
  const double ymin = flat ? 0.0 : points.col(1).minCoeff();
  const double ymax = flat ? 0.0 : points.col(1).maxCoeff();
  const double xspan = xmax > xmin ? xmax - xmin : 1.0;
  const double yspan = ymax > ymin ? ymax - ymin : 1.0;
  const double xscale = (width - 2 * margin) / xspan;
  const double yscale = (height - 2 * margin) / yspan;

  std::ofstream out(path);
  if (!out) throw Error(errc::io, "cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const double px = margin + (points(i, 0) - xmin + (xmax > xmin ? 0.0 : 0.5)) * xscale;
    const double y = flat ? 0.0 : points(i, 1);
    const double py =
        height - margin - (y - ymin + (ymax > ymin ? 0.0 : 0.5)) * yscale;
    out << "<circle cx=\"" << detail::fmt_double(px) << "\" cy=\"" << detail::fmt_double(py)
        << "\" r=\"3\" fill=\"" << detail::label_color(labels[i])
        << "\" fill-opacity=\"0.85\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw Error(errc::io, "write failed on " + path);
}

} // namespace otseg
