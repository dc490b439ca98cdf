# Controlled vocabularies of the DataCite 4.3 kernel.

NAMESPACE = "http://datacite.org/schema/kernel-4"
SCHEMA_LOCATION = "http://schema.datacite.org/meta/kernel-4.3/metadata.xsd"

CONTRIBUTOR_TYPES = frozenset({
    "ContactPerson", "DataCollector", "DataCurator", "DataManager", "Distributor",
    "Editor", "HostingInstitution", "Other", "Producer", "ProjectLeader",
    "ProjectManager", "ProjectMember", "RegistrationAgency", "RegistrationAuthority",
    "RelatedPerson", "ResearchGroup", "RightsHolder", "Researcher", "Sponsor",
    "Supervisor", "WorkPackageLeader",
})

DATE_TYPES = frozenset({
    "Accepted", "Available", "Collected", "Copyrighted", "Created", "Issued",
    "Other", "Submitted", "Updated", "Valid", "Withdrawn",
})

DESCRIPTION_TYPES = frozenset({
    "Abstract", "Methods", "SeriesInformation", "TableOfContents", "TechnicalInfo", "Other",
})

FUNDER_IDENTIFIER_TYPES = frozenset({"ISNI", "GRID", "ROR", "Crossref Funder ID", "Other"})

RELATED_IDENTIFIER_TYPES = frozenset({
    "ARK", "arXiv", "bibcode", "DOI", "EAN13", "EISSN", "Handle", "IGSN", "ISBN",
    "ISSN", "ISTC", "LISSN", "LSID", "PMID", "PURL", "UPC", "URL", "URN", "w3id",
})

RELATION_TYPES = frozenset({
    "IsCitedBy", "Cites", "IsSupplementTo", "IsSupplementedBy", "IsContinuedBy",
    "Continues", "IsNewVersionOf", "IsPreviousVersionOf", "IsPartOf", "HasPart",
    "IsReferencedBy", "References", "IsDocumentedBy", "Documents", "IsCompiledBy",
    "Compiles", "IsVariantFormOf", "IsOriginalFormOf", "IsIdenticalTo", "HasMetadata",
    "IsMetadataFor", "Reviews", "IsReviewedBy", "IsDerivedFrom", "IsSourceOf",
    "Describes", "IsDescribedBy", "HasVersion", "IsVersionOf", "Requires",
    "IsRequiredBy", "Obsoletes", "IsObsoletedBy",
})

RESOURCE_TYPES = frozenset({
    "Audiovisual", "Collection", "DataPaper", "Dataset", "Event", "Image",
    "InteractiveResource", "Model", "PhysicalObject", "Service", "Software", "Sound",
    "Text", "Workflow", "Other",
})

TITLE_TYPES = frozenset({"AlternativeTitle", "Subtitle", "TranslatedTitle", "Other"})


def allowed(vocabulary):
    return ", ".join(sorted(vocabulary))
