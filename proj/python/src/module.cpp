#include "vlab/scheme/config.hpp"
#include "vlab/scheme/instantiate.hpp"
#include "vlab/service/http_api.hpp"
#include "vlab/service/state.hpp"
#include "vlab/sim/csv.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;
using nlohmann::json;
using namespace vlab;

namespace {

scheme::SchemeTemplate tpl_of(const std::string& doc) { return scheme::template_from_json(json::parse(doc)); }

sim::TimeSeries simulate(const std::string& tpl_doc, const std::string& config_doc)
{
    const auto tpl = tpl_of(tpl_doc);
    const auto cfg = scheme::config_from_json(json::parse(config_doc));
    py::gil_scoped_release unlocked;
    return scheme::run_config(tpl, cfg);
}

// Owns a service plus its router; requests go through the same path as HTTP.
class PyService {
public:
    PyService(std::optional<std::string> data_dir, unsigned workers, int iterations)
    {
        service::ServiceOptions opt;
        if (data_dir)
            opt.data_dir = *data_dir;
        opt.workers = workers;
        opt.pbkdf2_iterations = iterations;
        svc_ = std::make_unique<service::LabService>(opt);
        router_ = std::make_unique<service::ApiRouter>(*svc_);
    }

    std::string bootstrap_admin(const std::string& login, const std::string& password)
    {
        return svc_->bootstrap_admin(login, password, login)->id;
    }

    py::tuple request(const std::string& method, const std::string& path, const std::string& token,
                      const std::string& body, const std::map<std::string, std::string>& query)
    {
        service::HttpRequest r;
        r.method = method;
        r.path = path;
        r.body = body;
        for (const auto& [k, v] : query)
            r.query.emplace(k, v);
        if (!token.empty())
            r.authorization = "Bearer " + token;
        service::HttpResponse out;
        {
            py::gil_scoped_release unlocked;
            out = router_->handle(r);
        }
        return py::make_tuple(out.status, out.content_type, py::bytes(out.body));
    }

    void wait_idle()
    {
        py::gil_scoped_release unlocked;
        svc_->wait_idle();
    }

private:
    std::unique_ptr<service::LabService> svc_;
    std::unique_ptr<service::ApiRouter> router_;
};

} // namespace

PYBIND11_MODULE(_vlab, m)
{
    m.doc() = "Virtual laboratory core: templates, configs, simulation and the lab service.";

    py::register_exception<scheme::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<scheme::TemplateError>(m, "TemplateError", PyExc_ValueError);
    py::register_exception<scheme::ValidationError>(m, "InvalidConfig", PyExc_ValueError);
    py::register_exception<nlohmann::json::exception>(m, "JSONError", PyExc_ValueError);

    m.def("template_ids", [] {
        std::vector<std::string> ids;
        for (const auto& t : scheme::builtin_templates())
            ids.push_back(t.template_id);
        return ids;
    });
    m.def("builtin_template", [](const std::string& id) {
        for (const auto& t : scheme::builtin_templates())
            if (t.template_id == id)
                return scheme::template_to_json(t).dump();
        throw py::key_error(id);
    });
    m.def("normalize_template", [](const std::string& doc) { return scheme::template_to_json(tpl_of(doc)).dump(); });
    m.def("default_config", [](const std::string& tpl) {
        return scheme::config_to_json(scheme::default_config(tpl_of(tpl))).dump();
    });
    m.def("random_config", [](const std::string& tpl, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return scheme::config_to_json(scheme::random_config(tpl_of(tpl), rng)).dump();
    });
    m.def("validate", [](const std::string& tpl, const std::string& config) {
        const auto cfg = scheme::config_from_json(json::parse(config));
        return scheme::report_to_json(scheme::validate_config(tpl_of(tpl), cfg)).dump();
    });
    m.def("run", [](const std::string& tpl, const std::string& config) {
        return service::to_json(simulate(tpl, config)).dump();
    });
    m.def("run_csv", [](const std::string& tpl, const std::string& config) {
        return sim::to_csv(simulate(tpl, config));
    });

    py::class_<PyService>(m, "Service")
        .def(py::init<std::optional<std::string>, unsigned, int>(), py::arg("data_dir") = py::none(),
             py::arg("workers") = 2, py::arg("pbkdf2_iterations") = 200000)
        .def("bootstrap_admin", &PyService::bootstrap_admin)
        .def("request", &PyService::request, py::arg("method"), py::arg("path"), py::arg("token") = "",
             py::arg("body") = "", py::arg("query") = std::map<std::string, std::string>{})
        .def("wait_idle", &PyService::wait_idle);
}
