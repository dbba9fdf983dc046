// Python bindings for the core operations: synthetic scenes, the trained
// model (inference + one-step loss/grad probe), evaluation metrics and the
// small image/matching utilities the pipeline is built from.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "focus/checkpoint.hpp"
#include "focus/clip_refiner.hpp"
#include "focus/config.hpp"
#include "focus/criterion.hpp"
#include "focus/data_synth.hpp"
#include "focus/image.hpp"
#include "focus/inference_metrics.hpp"
#include "focus/model.hpp"
#include "focus/optim.hpp"
#include "focus/tensor.hpp"

namespace py = pybind11;
using namespace focus;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Arr& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<long>(a.shape(i));
    Tensor t = make_tensor(shape, DType::F64);
    std::memcpy(t.raw().data(), a.data(), sizeof(double) * static_cast<size_t>(t.numel()));
    return t;
}

py::array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.values().data(),
                sizeof(double) * static_cast<size_t>(t.numel()));
    return a;
}

// ParamStore owns the parameters the model references, so they live together
struct Session {
    RunConfig cfg;
    std::unique_ptr<ParamStore> ps;
    std::unique_ptr<FocusModel> model;

    explicit Session(const RunConfig& c) : cfg(c) {
        validate_config(cfg);
        ps = std::make_unique<ParamStore>(cfg.seed);
        model = std::make_unique<FocusModel>(*ps, cfg);
    }

    static Session* create(const std::string& config_text, const std::string& preset) {
        return new Session(parse_config_text(config_text, preset_config(preset)));
    }

    static Session* from_checkpoint(const std::string& path) {
        LoadedCheckpoint lc = load_checkpoint(path);
        auto s = std::make_unique<Session>(parse_config_text(lc.meta.config_text));
        restore_params(*s->ps, lc.archive);
        return s.release();
    }

    void load(const std::string& path) {
        restore_params(*ps, load_checkpoint(path).archive);
    }

    py::dict infer(const Arr& image) {
        Tensor img = to_tensor(image);
        if (img.rank() != 3 || img.dim(0) != 3)
            throw std::invalid_argument("infer: image must be [3,H,W] in [0,1]");
        NoGrad ng;
        ModelOutput mo = model->forward(img);
        FuseResult fr = fuse_probs(mo.preds.back(), img.dim(1), img.dim(2));
        py::dict out;
        out["soft"] = to_array(fr.soft);
        out["mask"] = to_array(fr.binary);
        out["fg_query"] = fr.fg_query;
        out["role_conflict"] = fr.role_conflict;
        out["pca_degenerate"] = mo.ground_mask.degenerate;
        return out;
    }

    // one full forward/backward on a single sample; reports the loss terms
    // and the global gradient norm without touching the parameters
    py::dict loss_probe(const Arr& image, const Arr& mask) {
        Tensor img = to_tensor(image), gt = to_tensor(mask);
        if (img.rank() != 3 || img.dim(0) != 3 || gt.rank() != 2)
            throw std::invalid_argument("loss_probe: want [3,H,W] image and [H,W] mask");
        for (const auto& [name, t] : ps->all()) const_cast<Tensor&>(t).zero_grad();
        Targets tg = build_targets(gt, cfg.image_size / 4, cfg.image_size / 4);
        LossWeights w{cfg.lambda_clip, cfg.lambda_label, cfg.lambda_mask, cfg.lambda_bbox};
        double total = 0.0, gnorm = 0.0;
        LossBreakdown lb;
        {
            Tape tape;
            ModelOutput mo = model->forward(img);
            lb = total_loss(mo.preds, tg, w, cfg.deep_supervision, model->refiner(), mo.input);
            total = lb.total.item();
            tape.backward(lb.total);
        }
        for (const auto& [name, t] : ps->all())
            if (t.has_grad())
                for (double g : t.grad()) gnorm += g * g;
        py::dict out;
        out["total"] = total;
        out["clip"] = lb.clip;
        out["label"] = lb.label;
        out["mask"] = lb.mask;
        out["bbox"] = lb.bbox;
        out["grad_norm"] = std::sqrt(gnorm);
        return out;
    }

    long parameter_count() const { return ps->total_parameters(); }
    std::string config_text() const { return config_to_text(cfg); }
};

py::dict scene_dict(const Scene& s) {
    py::dict out;
    out["image"] = to_array(s.image);
    out["mask"] = to_array(s.mask);
    out["area_fraction"] = s.area_fraction;
    out["texture_distance"] = s.texture_distance;
    out["attempts"] = s.attempts;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "foreground segmentation core: synthetic data, model, metrics";

    m.def(
        "synth_scene",
        [](uint64_t seed, long index, long size, const std::string& mode,
           double contrast_bound) {
            SynthOptions opt;
            opt.size = size;
            opt.mode = mode;
            opt.contrast_bound = contrast_bound;
            return scene_dict(gen_scene(seed, index, opt));
        },
        py::arg("seed"), py::arg("index"), py::arg("size") = 96,
        py::arg("mode") = "salient", py::arg("contrast_bound") = 0.25);

    m.def(
        "write_dataset",
        [](const std::string& root, uint64_t seed, long count, long size,
           const std::string& mode) {
            SynthOptions opt;
            opt.size = size;
            opt.mode = mode;
            write_dataset(root, seed, count, opt);
        },
        py::arg("root"), py::arg("seed"), py::arg("count"), py::arg("size") = 96,
        py::arg("mode") = "salient");

    py::class_<Session>(m, "Model")
        .def(py::init([](const std::string& config_text, const std::string& preset) {
                 return Session::create(config_text, preset);
             }),
             py::arg("config_text") = "", py::arg("preset") = "desk")
        .def_static("from_checkpoint", &Session::from_checkpoint,
                    py::arg("path"))
        .def("load", &Session::load, py::arg("path"))
        .def("infer", &Session::infer, py::arg("image"))
        .def("loss_probe", &Session::loss_probe, py::arg("image"), py::arg("mask"))
        .def_property_readonly("parameter_count", &Session::parameter_count)
        .def_property_readonly("config_text", &Session::config_text);

    m.def(
        "metrics",
        [](const Arr& soft, const Arr& gt, const std::string& e_variant,
           const std::string& f_variant) {
            MetricOptions opt;
            opt.e_variant = e_variant;
            opt.f_variant = f_variant;
            MetricsReport r = compute_metrics(to_tensor(soft), to_tensor(gt), opt);
            py::dict out;
            out["mae"] = r.mae;
            out["ber"] = r.ber;
            out["f1"] = r.f1;
            out["fbeta"] = r.fbeta;
            out["weighted_fbeta"] = r.weighted_fbeta;
            out["auc"] = r.auc;
            out["s_measure"] = r.s_measure;
            out["e_measure"] = r.e_measure;
            out["empty_gt_warning"] = r.empty_gt_warning;
            return out;
        },
        py::arg("soft"), py::arg("gt"), py::arg("e_variant") = "adaptive",
        py::arg("f_variant") = "max");

    m.def(
        "hungarian",
        [](const Arr& cost) {
            if (cost.ndim() != 2 || cost.shape(0) != cost.shape(1))
                throw std::invalid_argument("hungarian: cost must be square");
            int n = static_cast<int>(cost.shape(0));
            std::vector<double> c(cost.data(), cost.data() + n * n);
            return hungarian(c, n);
        },
        py::arg("cost"));

    m.def(
        "canny",
        [](const Arr& gray, double sigma, double low, double high) {
            CannyParams p;
            p.sigma = sigma;
            p.low = low;
            p.high = high;
            return to_array(canny(to_tensor(gray), p));
        },
        py::arg("gray"), py::arg("sigma") = 1.0, py::arg("low") = 0.1, py::arg("high") = 0.2);

    m.def(
        "gaussian_blur",
        [](const Arr& img, double sigma) { return to_array(gaussian_blur(to_tensor(img), sigma)); },
        py::arg("img"), py::arg("sigma"));

    m.def(
        "pca_top_component",
        [](const Arr& points) {
            if (points.ndim() != 2) throw std::invalid_argument("pca: points must be [N,C]");
            PcaResult r = pca_top_component(points.data(), static_cast<long>(points.shape(0)),
                                            static_cast<long>(points.shape(1)));
            py::dict out;
            out["direction"] = py::cast(r.direction);
            out["scores"] = py::cast(r.scores);
            out["eigenvalue"] = r.eigenvalue;
            out["degenerate"] = r.degenerate;
            return out;
        },
        py::arg("points"));

    m.def(
        "contrastive_loss_value",
        [](double sff, double sfb, double sbf, double sbb, double tau) {
            return contrastive_pair_loss(Tensor::scalar(sff), Tensor::scalar(sfb),
                                         Tensor::scalar(sbf), Tensor::scalar(sbb), tau)
                .item();
        },
        py::arg("sim_ff"), py::arg("sim_fb"), py::arg("sim_bf"), py::arg("sim_bb"),
        py::arg("tau"));

    m.attr("__version__") = "0.1.0";
}
