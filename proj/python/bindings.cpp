#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsfg/alignment.hpp"
#include "fsfg/bas.hpp"
#include "fsfg/erasing.hpp"
#include "fsfg/harness.hpp"
#include "fsfg/objective.hpp"

namespace py = pybind11;
using namespace fsfg;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

FeatureArray to_features(const Arr& a) {
    if (a.ndim() != 3) throw std::invalid_argument("expected a (c,h,w) array");
    FeatureArray f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                   static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), f.values.data());
    return f;
}

Image to_image(const Arr& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected (H,W,3)");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), img.pixels.data());
    return img;
}

py::array image_to_numpy(const Image& img) {
    Arr out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
             static_cast<py::ssize_t>(3)});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

py::array plane_to_numpy(const Eigen::ArrayXd& v, int h, int w) {
    Arr out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
    std::copy(v.data(), v.data() + v.size(), out.mutable_data());
    return out;
}

py::array matrix_to_numpy(const Eigen::ArrayXd& v, int r, int c) {
    return plane_to_numpy(v, r, c);
}

ad::Var feature_var(const Arr& a) {
    FeatureArray f = to_features(a);
    return ad::constant({static_cast<std::size_t>(f.c), static_cast<std::size_t>(f.h),
                         static_cast<std::size_t>(f.w)},
                        f.values);
}

py::tuple box_tuple(const BBox& b) {
    return py::make_tuple(b.row_min, b.col_min, b.row_max, b.col_max);
}

}  // namespace

PYBIND11_MODULE(_fsfg, m) {
    m.doc() = "background-suppression / foreground-alignment few-shot pipeline (C++ core)";

    // ---- BAS ----
    m.def("aggregate_channels", [](const Arr& f) {
        FeatureArray fa = to_features(f);
        ActivationMap a = bas::aggregate_channels(fa);
        return plane_to_numpy(a.values, a.h, a.w);
    });
    m.def("adaptive_threshold", [](const Arr& a) {
        if (a.ndim() != 2) throw std::invalid_argument("expected (h,w)");
        ActivationMap am{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                         Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size())};
        return bas::adaptive_threshold(am);
    });
    m.def("foreground_mask", [](const Arr& a, double theta) {
        ActivationMap am{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                         Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size())};
        BinaryMask mk = bas::foreground_mask(am, theta);
        return plane_to_numpy(mk.values, mk.h, mk.w);
    });
    m.def("largest_connected_component", [](const Arr& a) {
        BinaryMask mk{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size())};
        BinaryMask out = bas::largest_connected_component(mk);
        return plane_to_numpy(out.values, out.h, out.w);
    });
    m.def("tight_bbox", [](const Arr& a) {
        BinaryMask mk{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size())};
        return box_tuple(bas::tight_bbox(mk));
    });
    m.def("to_image_box", [](py::tuple b, int fh, int fw, int ih, int iw) {
        BBox box{b[0].cast<int>(), b[1].cast<int>(), b[2].cast<int>(), b[3].cast<int>()};
        ImageBBox ib = bas::to_image_box(box, fh, fw, ih, iw);
        return py::make_tuple(ib.row_min, ib.col_min, ib.row_max, ib.col_max);
    });
    m.def("crop_and_zoom", [](const Arr& img, py::tuple b, int target) {
        ImageBBox box{b[0].cast<int>(), b[1].cast<int>(), b[2].cast<int>(), b[3].cast<int>()};
        return image_to_numpy(bas::crop_and_zoom(to_image(img), box, target));
    });
    m.def("refine", [](const Arr& img, const Arr& features) {
        auto [refined, fg] = bas::refine(to_image(img), to_features(features));
        py::dict d;
        d["refined"] = image_to_numpy(refined);
        d["activation"] = plane_to_numpy(fg.activation.values, fg.activation.h, fg.activation.w);
        d["threshold"] = fg.threshold;
        d["mask"] = plane_to_numpy(fg.mask.values, fg.mask.h, fg.mask.w);
        d["component_mask"] =
            plane_to_numpy(fg.component_mask.values, fg.component_mask.h, fg.component_mask.w);
        d["feature_box"] = box_tuple(fg.feature_box);
        d["image_box"] = py::make_tuple(fg.image_box.row_min, fg.image_box.col_min,
                                        fg.image_box.row_max, fg.image_box.col_max);
        return d;
    });

    // ---- erasing ----
    m.def("erase_mask", [](const Arr& f, double gamma) {
        BinaryMask mk = erasing::erase_mask(to_features(f), gamma);
        return plane_to_numpy(mk.values, mk.h, mk.w);
    });
    m.def("apply_erase", [](const Arr& f, const Arr& mask) {
        FeatureArray fa = to_features(f);
        BinaryMask mk{static_cast<int>(mask.shape(0)), static_cast<int>(mask.shape(1)),
                      Eigen::Map<const Eigen::ArrayXd>(mask.data(), mask.size())};
        FeatureArray out = erasing::apply_erase(fa, mk);
        Arr res({static_cast<py::ssize_t>(out.c), static_cast<py::ssize_t>(out.h),
                 static_cast<py::ssize_t>(out.w)});
        std::copy(out.values.data(), out.values.data() + out.values.size(), res.mutable_data());
        return res;
    });

    // ---- alignment ----
    m.def("to_descriptors", [](const Arr& f) {
        FeatureArray fa = to_features(f);
        return matrix_to_numpy(alignment::to_descriptors_values(fa), fa.h * fa.w, fa.c);
    });
    m.def("correlation", [](const Arr& fs, const Arr& fq) {
        FeatureArray a = to_features(fs), b = to_features(fq);
        return matrix_to_numpy(alignment::correlation_values(a, b), b.h * b.w, a.h * a.w);
    });
    m.def("row_softmax", [](const Arr& a) {
        if (a.ndim() != 2) throw std::invalid_argument("expected a matrix");
        auto v = ad::constant({static_cast<std::size_t>(a.shape(0)),
                               static_cast<std::size_t>(a.shape(1))},
                              Eigen::Map<const Eigen::ArrayXd>(a.data(), a.size()));
        return matrix_to_numpy(ad::row_softmax(v)->value, static_cast<int>(a.shape(0)),
                               static_cast<int>(a.shape(1)));
    });
    m.def("align", [](const Arr& fs, const Arr& fq) {
        ad::Var out = alignment::align(feature_var(fs), feature_var(fq));
        return matrix_to_numpy(out->value, static_cast<int>(out->shape[0]),
                               static_cast<int>(out->shape[1]));
    });
    m.def("l2l", [](const Arr& fs, const Arr& fq) {
        return alignment::l2l_values(to_features(fs), to_features(fq));
    });
    m.def("score", [](const Arr& fq, const Arr& proto, double tau) {
        return alignment::score_values(to_features(fq), to_features(proto), tau);
    });

    // ---- objective / reporting ----
    m.def("combine_losses",
          [](double graw, double gref, double lraw, double lref, double alpha, double beta,
             double lambda) {
              LossWeights w;
              w.alpha = alpha;
              w.beta = beta;
              w.lambda = lambda;
              LossBreakdown b = objective::combine_values(graw, gref, lraw, lref, w);
              py::dict d;
              d["global_raw"] = b.global_raw;
              d["global_refined"] = b.global_refined;
              d["local_raw"] = b.local_raw;
              d["local_refined"] = b.local_refined;
              d["global_total"] = b.global_total;
              d["local_total"] = b.local_total;
              d["total"] = b.total;
              return d;
          },
          py::arg("global_raw"), py::arg("global_refined"), py::arg("local_raw"),
          py::arg("local_refined"), py::arg("alpha") = 0.5, py::arg("beta") = 0.5,
          py::arg("lam") = 0.1);
    m.def("aggregate_report", [](const std::vector<double>& accs) {
        EvalReport r = aggregate_report(accs, 0, 0, 0);
        py::dict d;
        d["mean_accuracy"] = r.mean_accuracy;
        d["ci95_halfwidth"] = r.ci95_halfwidth;
        d["n_episodes"] = r.n_episodes;
        return d;
    });
    m.def("lr_schedule", [](int epoch) {
        TrainConfig cfg;
        return lr_at_epoch(cfg, epoch);
    });
    m.def("variance_probe_features", [](const Arr& img, int gh, int gw) {
        FeatureArray f = variance_probe_features(to_image(img), gh, gw);
        Arr res({static_cast<py::ssize_t>(f.c), static_cast<py::ssize_t>(f.h),
                 static_cast<py::ssize_t>(f.w)});
        std::copy(f.values.data(), f.values.data() + f.values.size(), res.mutable_data());
        return res;
    });
}
