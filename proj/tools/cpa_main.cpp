#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cpa/pipeline.hpp"
#include "cpa/synth.hpp"
#include "cpa/text.hpp"

namespace fs = std::filesystem;
using namespace cpa;

namespace {

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw InputError("cannot write '" + p.string() + "'");
    return out;
}

/// Writes to `path`, or stdout when it is empty.
template <typename F>
void emit(const std::string& path, F&& write) {
    if (path.empty()) {
        write(std::cout);
    } else {
        auto out = open_out(path);
        write(out);
    }
}

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;
    int workers = 0;
    std::string output_dir;
    bool verbose = false;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "Flat key = value config file");
        app->add_option("--set", sets, "Override a config key (key=value)");
        app->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        app->add_option("--output-dir", output_dir, "Report directory");
        app->add_flag("-v,--verbose", verbose, "Structured progress lines on stderr");
    }

    PipelineConfig load(Mode mode) const {
        PipelineConfig c = file.empty() ? PipelineConfig{} : read_config_file(file);
        for (const auto& s : sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + s + "'");
            c.set(text::trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
        }
        if (workers > 0) c.workers = workers;
        if (!output_dir.empty()) c.output_dir = output_dir;
        c.mode = mode;
        c.validate();
        return c;
    }
};

void write_reports(const fs::path& dir, const std::string& stem, const std::vector<CentralityReport>& reports) {
    auto csv = open_out(dir / (stem + ".csv"));
    write_report_csv(csv, reports);
    auto jsonl = open_out(dir / (stem + ".jsonl"));
    write_report_jsonl(jsonl, reports);
}

GeoDb load_geo(const std::string& registry, const std::string& overrides) {
    auto build = build_geodb(registry, overrides.empty() ? std::nullopt : std::optional<std::string>(overrides));
    for (const auto& r : build.rejects) std::cerr << "registry line " << r.line << ": " << r.reason << '\n';
    return std::move(build.db);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Country path analysis: routing inference, country paths and centrality"};
    app.require_subcommand(1);

    // ingest
    std::string rib_file, rejects_file, out_file;
    auto* ingest = app.add_subcommand("ingest", "Parse RIB routes and report rejects");
    ingest->add_option("--rib", rib_file, "observer<TAB>prefix<TAB>as path")->required();
    ingest->add_option("--rejects", rejects_file, "CSV of rejected lines");
    ingest->add_option("--out", out_file, "Normalized routes");

    // relationships
    std::string overrides_file;
    RelationshipParams rel_params;
    auto* rels = app.add_subcommand("relationships", "Extract the AS graph and label its edges");
    rels->add_option("--rib", rib_file)->required();
    rels->add_option("--overrides", overrides_file, "asn1,asn2,label rows applied last");
    rels->add_option("--sibling-threshold", rel_params.sibling_threshold);
    rels->add_option("--peer-degree-ratio", rel_params.peer_degree_ratio);
    rels->add_option("--out", out_file);

    // propagate
    std::string relationships_file, prefix_text;
    PropagationParams prop_params;
    auto* prop = app.add_subcommand("propagate", "Simulate route propagation and dump candidate lists");
    prop->add_option("--rib", rib_file)->required();
    prop->add_option("--relationships", relationships_file, "Labels to use instead of inference");
    prop->add_option("--prefix", prefix_text, "Single destination prefix");
    prop->add_option("--max-pops-per-vertex", prop_params.max_pops_per_vertex);
    prop->add_option("--max-alternates", prop_params.max_alternates);
    prop->add_option("--out", out_file);

    // model
    std::string trace_file, registry_file, lookup_file;
    auto* model_cmd = app.add_subcommand("model", "Annotate traceroutes and build the ingress model");
    model_cmd->add_option("--traces", trace_file)->required();
    model_cmd->add_option("--registry", registry_file)->required();
    model_cmd->add_option("--overrides", overrides_file);
    model_cmd->add_option("--lookup", lookup_file, "ip|asn|country answers for unresolved addresses");
    model_cmd->add_option("--out", out_file)->required();

    // predict
    std::string as_path_text, src_text, model_file;
    bool explain = false;
    auto* predict = app.add_subcommand("predict", "Country path for an AS path");
    predict->add_option("--as-path", as_path_text, "Comma-separated ASNs")->required();
    predict->add_option("--src", src_text)->required();
    predict->add_option("--dst-prefix", prefix_text)->required();
    predict->add_option("--model", model_file)->required();
    predict->add_flag("--explain", explain, "Also print the table used per transition");

    // cc / scc
    std::string assignments_file, table_file;
    bool jsonl = false;
    auto* cc = app.add_subcommand("cc", "Country centrality from path assignments");
    auto* scc = app.add_subcommand("scc", "Strong country centrality from path assignments");
    for (auto* sub : {cc, scc}) {
        sub->add_option("--assignments", assignments_file)->required();
        sub->add_option("--prefix-table", table_file)->required();
        sub->add_flag("--jsonl", jsonl, "JSON lines instead of CSV");
    }

    ConfigArgs observed_args, validate_args, mesh_args;
    auto* observed = app.add_subcommand("observed-cc", "CC from observed traceroute and RIB paths");
    observed_args.attach(observed);
    auto* validate = app.add_subcommand("validate", "Observed versus inferred CC on held-out traceroutes");
    validate_args.attach(validate);
    auto* mesh = app.add_subcommand("full-mesh", "CC and SCC over every prefix pair");
    mesh_args.attach(mesh);
    bool reference = false;
    mesh->add_flag("--reference", reference, "Single-threaded reference implementation");

    // report
    std::string report_file;
    std::size_t top_n = 10;
    auto* report = app.add_subcommand("report", "Ranked listing of a report CSV");
    report->add_option("--input", report_file)->required();
    report->add_option("--top", top_n);

    // bench
    std::size_t bench_entries = 100000, bench_queries = 20000;
    double bench_seconds = 1.0;
    auto* bench = app.add_subcommand("bench", "Country-path inference throughput, single-threaded");
    bench->add_option("--entries", bench_entries, "Minimum model table entries");
    bench->add_option("--queries", bench_queries);
    bench->add_option("--seconds", bench_seconds);

    // synth
    synth::SynthSpec spec;
    std::string synth_dir;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic input set and config");
    synth_cmd->add_option("--out", synth_dir)->required();
    synth_cmd->add_option("--ases", spec.ases);
    synth_cmd->add_option("--countries", spec.countries);
    synth_cmd->add_option("--observers", spec.observers);
    synth_cmd->add_option("--trace-sources", spec.trace_sources);
    synth_cmd->add_option("--seed", spec.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*ingest) {
            auto r = parse_rib_file(rib_file);
            std::cerr << "routes=" << r.corpus.size() << " prefixes=" << r.corpus.prefixes().size()
                      << " rejects=" << r.rejects.size() << " as_set_tokens=" << r.as_set_tokens_dropped
                      << " prepends=" << r.prepends_collapsed << '\n';
            if (!rejects_file.empty()) {
                auto out = open_out(rejects_file);
                write_rejects(out, r.rejects);
            }
            if (!out_file.empty()) {
                auto out = open_out(out_file);
                write_rib(out, r.corpus);
            }
        } else if (*rels) {
            auto r = parse_rib_file(rib_file);
            auto inferred = infer_relationships(extract_topology(r.corpus), r.corpus, rel_params);
            auto labels = inferred.topology.labels();
            if (!overrides_file.empty()) labels = apply_overrides(std::move(labels), read_relationships_file(overrides_file));
            const auto stats = count_labels(labels);
            std::cerr << "vertices=" << inferred.topology.vertex_count() << " edges=" << labels.size()
                      << " c2p=" << stats.customer_provider << " p2p=" << stats.peer << " s2s=" << stats.sibling
                      << " low_confidence=" << inferred.stats.low_confidence << '\n';
            emit(out_file, [&](std::ostream& o) { write_relationships(o, labels); });
        } else if (*prop) {
            auto r = parse_rib_file(rib_file);
            const auto skeleton = extract_topology(r.corpus);
            const auto labels = relationships_file.empty()
                                    ? infer_relationships(skeleton, r.corpus).topology.labels()
                                    : read_relationships_file(relationships_file);
            const Topology topo(labels, skeleton.vertices);
            std::vector<Prefix> targets;
            if (prefix_text.empty())
                targets = r.corpus.prefixes();
            else
                targets.push_back(parse_prefix(prefix_text));
            std::sort(targets.begin(), targets.end());
            emit(out_file, [&](std::ostream& o) {
                for (const auto& p : targets) {
                    try {
                        write_snapshot(o, propagate(topo, prime(r.corpus, p, topo), prop_params));
                    } catch (const PropagationError& e) {
                        std::cerr << e.what() << '\n';
                    }
                }
            });
        } else if (*model_cmd) {
            auto geo = load_geo(registry_file, overrides_file);
            std::unique_ptr<FileLookupClient> client;
            if (!lookup_file.empty()) client = std::make_unique<FileLookupClient>(FileLookupClient::from_file(lookup_file));
            Resolver resolver(geo, client.get());
            std::vector<RejectRecord> rejects;
            std::ifstream in(trace_file);
            if (!in) throw InputError("cannot open traceroute file '" + trace_file + "'");
            auto traces = parse_traceroutes(in, &rejects);
            auto annotated = annotate_all(traces, resolver);
            IngressModelBuilder b;
            for (const auto& t : annotated.traces) b.add(t);
            auto out = open_out(out_file);
            b.write(out, &geo);
            std::cerr << "traces=" << annotated.stats.total << " complete=" << annotated.stats.complete
                      << " skipped=" << annotated.stats.skipped << " rejects=" << rejects.size()
                      << " transitions=" << b.transitions_used() << '\n';
        } else if (*predict) {
            std::ifstream in(model_file);
            if (!in) throw InputError("cannot open model '" + model_file + "'");
            GeoDb geo;
            const auto model = IngressModelBuilder::read(in, &geo).finalize();
            const auto path = parse_as_path(as_path_text, ',');
            const auto pred = predict_country_path(path, parse_ip(src_text), parse_prefix(prefix_text), model, geo);
            std::cout << format_country_path(pred.path) << '\n';
            if (explain) {
                for (std::size_t i = 0; i < pred.sources.size(); ++i)
                    std::cout << to_string(path[i]) << "->" << to_string(path[i + 1]) << '\t'
                              << match_source_name(pred.sources[i]) << '\n';
                if (pred.low_confidence) std::cout << "low-confidence\n";
            }
        } else if (*cc || *scc) {
            const auto table = read_prefix_table_file(table_file);
            CentralityAccumulator acc(table);
            for (const auto& a : read_assignments_file(assignments_file)) acc.add(a);
            const std::vector<CentralityReport> reports{
                acc.report(*cc ? MetricKind::CC : MetricKind::SCC, PathSource::Inferred)};
            if (jsonl)
                write_report_jsonl(std::cout, reports);
            else
                write_report_csv(std::cout, reports);
        } else if (*observed || *validate || *mesh) {
            const auto& args = *observed ? observed_args : *validate ? validate_args : mesh_args;
            const auto mode = *observed ? Mode::ObservedCc : *validate ? Mode::Validate : Mode::FullMesh;
            const auto config = args.load(mode);
            const Log log(args.verbose ? &std::cerr : nullptr);
            const StageCache cache(config.cache_dir);
            const fs::path dir = config.output_dir;
            fs::create_directories(dir);
            auto data = load_data(config, cache, log);

            if (mode == Mode::ObservedCc) {
                auto r = run_observed_cc(data, config, cache, log);
                write_reports(dir, "observed_cc", {r.traceroute_cc, r.bgp_cc});
                write_report_csv(std::cout, std::vector{r.traceroute_cc, r.bgp_cc});
            } else if (mode == Mode::Validate) {
                auto r = run_validation(data, config, cache, log);
                auto out = open_out(dir / "validation.csv");
                out << "country,actual,inferred\n";
                for (const auto& row : r.rows)
                    out << row.country.str() << ',' << text::format_double(row.actual) << ','
                        << text::format_double(row.inferred) << '\n';
                std::ostringstream summary;
                summary << "test_traces=" << r.test_traces << "\nused=" << r.used
                        << "\nexcluded_overlap=" << r.excluded_overlap << "\nunreachable=" << r.unreachable
                        << "\nexact_matches=" << r.exact_matches
                        << "\nmean_agreement=" << text::format_double(r.mean_agreement) << '\n';
                if (r.fit)
                    summary << "slope=" << text::format_double(r.fit->slope)
                            << "\nintercept=" << text::format_double(r.fit->intercept)
                            << "\nr2=" << text::format_double(r.fit->r2) << "\npoints=" << r.fit->points << '\n';
                else
                    summary << "notice=" << r.notice << '\n';
                auto s = open_out(dir / "validation_summary.txt");
                s << summary.str();
                std::cout << summary.str();
                write_reports(dir, "validation_cc", {r.actual_cc, r.inferred_cc});
            } else {
                Resolver resolver(data.geo, data.lookup.get());
                auto annotated = annotate_all(data.traces, resolver);
                const auto model = cached_model(annotated.traces, cache,
                                                text::fnv1a("all|" + text::hex64(config_fingerprint(config))),
                                                config.workers, log);
                FullMeshResult r;
                if (reference) {
                    r = run_full_mesh_reference(data, model, config.propagation);
                } else {
                    FullMeshOptions opt;
                    opt.workers = config.workers;
                    opt.shard_size = config.shard_size;
                    opt.propagation = config.propagation;
                    if (config.checkpoint)
                        opt.checkpoint_dir = dir / "shards" / text::hex64(config_fingerprint(config));
                    r = run_full_mesh(data, model, opt, log);
                }
                for (auto* rep : {&r.cc, &r.scc})
                    for (const auto& [k, v] : config.echo())
                        if (k != "workers" && k != "output_dir" && k != "cache_dir" && k != "checkpoint")
                            rep->metadata["config." + k] = v;
                write_reports(dir, "full_mesh", {r.cc, r.scc});
                write_report_csv(std::cout, std::vector{r.cc, r.scc});
                std::cerr << "destinations=" << r.destinations << " failed=" << r.failed_destinations
                          << " shards=" << r.shards << " resumed=" << r.resumed_shards
                          << " truncated=" << r.truncated_lists << '\n';
            }
        } else if (*report) {
            std::ifstream in(report_file);
            if (!in) throw InputError("cannot open report '" + report_file + "'");
            for (const auto& rep : read_report_csv(in)) {
                std::cout << metric_name(rep.metric) << " (" << path_source_name(rep.source) << ")\n";
                for (const auto& row : rank_report(rep, top_n))
                    std::cout << "  " << row.rank << '\t' << row.country.str() << '\t'
                              << text::format_double(row.normalized) << '\n';
            }
        } else if (*bench) {
            const auto w = synth::make_predict_workload(bench_entries, bench_queries, 42);
            const auto t = synth::measure_predict(w, bench_seconds);
            std::cout << "entries=" << w.model.entry_count() << " inferences=" << t.inferences
                      << " seconds=" << text::format_double(t.seconds)
                      << " per_second=" << static_cast<std::uint64_t>(t.per_second)
                      << " lookups_per_inference="
                      << text::format_double(static_cast<double>(t.lookups) / static_cast<double>(t.inferences))
                      << '\n';
        } else if (*synth_cmd) {
            const auto net = synth::generate(spec);
            const fs::path dir = synth_dir;
            {
                auto o = open_out(dir / "rib.tsv");
                write_rib(o, net.data().corpus);
            }
            {
                auto o = open_out(dir / "traces.tsv");
                write_traceroutes(o, net.traces);
            }
            {
                auto o = open_out(dir / "registry.csv");
                write_geodb(o, net.geo);
            }
            {
                auto o = open_out(dir / "relationships.csv");
                write_relationships(o, net.labels);
            }
            {
                auto o = open_out(dir / "prefix_table.csv");
                write_prefix_table(o, net.table());
            }
            auto o = open_out(dir / "config.ini");
            o << "# synthetic inputs, seed " << spec.seed << "\nrib = " << (dir / "rib.tsv").string()
              << "\ntraces = " << (dir / "traces.tsv").string() << "\nregistry = " << (dir / "registry.csv").string()
              << "\nrelationships = " << (dir / "relationships.csv").string()
              << "\nprefix_table = " << (dir / "prefix_table.csv").string()
              << "\noutput_dir = " << (dir / "out").string() << "\n";
        }
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 1;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 1;
    } catch (const PropagationError& e) {
        std::cerr << "propagation error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
